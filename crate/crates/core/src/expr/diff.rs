use super::{add, call, div, mul, neg, pow, sub, BinOp, Func, Node, Var, SMOOTHSTEP_MAX_ORDER};

/// d(node)/d(var), built through the folding constructors.
pub(super) fn derivative(node: &Node, var: Var) -> Node {
    match node {
        Node::Const(_) => Node::Const(0.0),
        Node::Var(v) => Node::Const(if *v == var { 1.0 } else { 0.0 }),
        Node::Neg(a) => neg(derivative(a, var)),
        Node::Binary(op, a, b) => {
            let da = derivative(a, var);
            let db = derivative(b, var);
            let a = a.simplify();
            let b = b.simplify();
            match op {
                BinOp::Add => add(da, db),
                BinOp::Sub => sub(da, db),
                BinOp::Mul => add(mul(da, b), mul(a, db)),
                BinOp::Div => {
                    if db.is_const() == Some(0.0) {
                        div(da, b)
                    } else {
                        // (da*b - a*db) / b^2
                        div(sub(mul(da, b.clone()), mul(a, db)), pow(b, 2.0))
                    }
                }
            }
        }
        Node::Pow(a, c) => {
            let da = derivative(a, var);
            mul(mul(Node::Const(*c), pow(a.simplify(), c - 1.0)), da)
        }
        Node::Call(func, a) => {
            let da = derivative(a, var);
            if da.is_const() == Some(0.0) {
                return Node::Const(0.0);
            }
            let a = a.simplify();
            let outer = match func {
                Func::Sin => call(Func::Cos, a),
                Func::Cos => neg(call(Func::Sin, a)),
                Func::Exp => call(Func::Exp, a),
                Func::Log => div(Node::Const(1.0), a),
                Func::Sqrt => div(Node::Const(0.5), call(Func::Sqrt, a)),
                Func::Tanh => sub(Node::Const(1.0), pow(call(Func::Tanh, a), 2.0)),
                Func::Smoothstep(k) if *k < SMOOTHSTEP_MAX_ORDER => {
                    call(Func::Smoothstep(k + 1), a)
                }
                // The fifth derivative is piecewise constant.
                Func::Smoothstep(_) => Node::Const(0.0),
            };
            mul(outer, da)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::Expression;
    use super::*;

    fn d(s: &str, n: usize, m: usize, var: Var) -> Expression {
        Expression::parse(s, n, m).unwrap().differentiate(var)
    }

    #[test]
    fn cube_rule() {
        assert_eq!(d("x1^3", 1, 0, Var::State(0)).to_string(), "3*x1^2");
    }

    #[test]
    fn exa_dynamics_partial() {
        let e = d("-4*x1 + x2^3 + u1", 2, 1, Var::State(1));
        assert_eq!(e.to_string(), "3*x2^2");
    }

    #[test]
    fn stationary_point() {
        let e = d("(u1-0.5)^2", 0, 1, Var::Control(0));
        assert_eq!(e.eval(&[], &[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn independent_variable_gives_zero() {
        let e = d("sin(x1)*exp(u1)", 2, 1, Var::State(1));
        assert_eq!(e.node(), &Node::Const(0.0));
    }

    #[test]
    fn smoothstep_chain() {
        let e = Expression::parse("smoothstep(x1^2 + x2^2)", 2, 0).unwrap();
        let dx = e.differentiate(Var::State(0));
        let dxx = dx.differentiate(Var::State(0));
        let (x, y) = (1.1, 0.7);
        let h = 1e-5;
        let fd = (e.eval(&[x + h, y], &[]).unwrap() - e.eval(&[x - h, y], &[]).unwrap()) / (2.0 * h);
        assert!((fd - dx.eval(&[x, y], &[]).unwrap()).abs() < 1e-8);
        let fd2 = (dx.eval(&[x + h, y], &[]).unwrap() - dx.eval(&[x - h, y], &[]).unwrap()) / (2.0 * h);
        assert!((fd2 - dxx.eval(&[x, y], &[]).unwrap()).abs() < 1e-7);
    }
}
