//! Printing that re-parses to the same tree (up to negative constants,
//! which come back as a negation of the magnitude and evaluate identically).

use std::fmt::{self, Write};

use super::{BinOp, Node};

const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const ATOM: u8 = 5;

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Const(c) if c.is_sign_negative() => NEG,
        Node::Const(_) | Node::Var(_) | Node::Call(..) => ATOM,
        Node::Neg(_) => NEG,
        Node::Pow(..) => 4,
        Node::Binary(BinOp::Add | BinOp::Sub, ..) => ADD,
        Node::Binary(BinOp::Mul | BinOp::Div, ..) => MUL,
    }
}

fn child<W: Write>(w: &mut W, node: &Node, min_prec: u8) -> fmt::Result {
    if precedence(node) < min_prec {
        w.write_char('(')?;
        write_node(w, node)?;
        w.write_char(')')
    } else {
        write_node(w, node)
    }
}

pub(super) fn write_node<W: Write>(w: &mut W, node: &Node) -> fmt::Result {
    match node {
        Node::Const(c) => write!(w, "{c}"),
        Node::Var(v) => write!(w, "{v}"),
        Node::Neg(a) => {
            w.write_char('-')?;
            child(w, a, NEG)
        }
        Node::Binary(op, a, b) => {
            let (p, sym) = match op {
                BinOp::Add => (ADD, " + "),
                BinOp::Sub => (ADD, " - "),
                BinOp::Mul => (MUL, "*"),
                BinOp::Div => (MUL, "/"),
            };
            child(w, a, p)?;
            w.write_str(sym)?;
            // Left-associative grammar: an equal-precedence right operand needs parentheses.
            child(w, b, p + 1)
        }
        Node::Pow(a, c) => {
            child(w, a, ATOM)?;
            if c.is_sign_negative() {
                write!(w, "^({c})")
            } else {
                write!(w, "^{c}")
            }
        }
        Node::Call(func, a) => {
            write!(w, "{}(", func.name())?;
            write_node(w, a)?;
            w.write_char(')')
        }
    }
}
