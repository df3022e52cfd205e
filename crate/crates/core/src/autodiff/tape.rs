use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Real;

const NO_ARG: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Tanh,
    Sqrt,
}

/// One elementary operation: up to two operands and the local partial
/// derivative with respect to each.
#[derive(Clone, Copy, Debug)]
pub struct Node {
    pub kind: OpKind,
    pub args: [usize; 2],
    pub partials: [f64; 2],
}

/// Append-only Wengert list for scalar reverse-mode differentiation.
///
/// Operands always precede the node that consumes them, so a single
/// backwards pass over the node list is a valid reverse topological sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A scalar recorded on a [`Tape`]. Constants carry no tape reference and
/// never allocate nodes.
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: usize,
    val: f64,
}

/// Adjoints of every node after a reverse sweep.
#[derive(Clone, Debug)]
pub struct Adjoints {
    values: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    /// Register an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node {
            kind: OpKind::Leaf,
            args: [NO_ARG, NO_ARG],
            partials: [0.0, 0.0],
        });
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> Vec<Node> {
        self.nodes.borrow().clone()
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Reverse sweep seeded with 1 at `root`.
    pub fn gradient(&self, root: Var<'_>) -> Adjoints {
        let nodes = self.nodes.borrow();
        let mut values = vec![0.0; nodes.len()];
        if let Some(tape) = root.tape {
            assert!(
                std::ptr::eq(tape, self),
                "root recorded on a different tape"
            );
            values[root.idx] = 1.0;
            for i in (0..=root.idx).rev() {
                let adj = values[i];
                if adj == 0.0 {
                    continue;
                }
                let node = nodes[i];
                for k in 0..2 {
                    let a = node.args[k];
                    if a != NO_ARG {
                        debug_assert!(a < i);
                        values[a] += adj * node.partials[k];
                    }
                }
            }
        }
        Adjoints { values }
    }
}

impl Adjoints {
    /// ∂root/∂v; zero for constants and for nodes the root does not depend on.
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        if v.tape.is_none() {
            0.0
        } else {
            self.values[v.idx]
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Self {
            tape: None,
            idx: NO_ARG,
            val: value,
        }
    }

    pub fn value(&self) -> f64 {
        self.val
    }

    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.idx)
    }

    fn unary(self, kind: OpKind, val: f64, partial: f64) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(tape) => {
                let idx = tape.push(Node {
                    kind,
                    args: [self.idx, NO_ARG],
                    partials: [partial, 0.0],
                });
                Var {
                    tape: Some(tape),
                    idx,
                    val,
                }
            }
        }
    }

    fn binary(self, rhs: Self, kind: OpKind, val: f64, dl: f64, dr: f64) -> Self {
        match (self.tape, rhs.tape) {
            (None, None) => Var::constant(val),
            (Some(tape), None) => {
                let idx = tape.push(Node {
                    kind,
                    args: [self.idx, NO_ARG],
                    partials: [dl, 0.0],
                });
                Var {
                    tape: Some(tape),
                    idx,
                    val,
                }
            }
            (None, Some(tape)) => {
                let idx = tape.push(Node {
                    kind,
                    args: [rhs.idx, NO_ARG],
                    partials: [dr, 0.0],
                });
                Var {
                    tape: Some(tape),
                    idx,
                    val,
                }
            }
            (Some(a), Some(b)) => {
                assert!(std::ptr::eq(a, b), "operands recorded on different tapes");
                let idx = a.push(Node {
                    kind,
                    args: [self.idx, rhs.idx],
                    partials: [dl, dr],
                });
                Var {
                    tape: Some(a),
                    idx,
                    val,
                }
            }
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Add, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Sub, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Mul, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.binary(rhs, OpKind::Div, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(OpKind::Neg, -self.val, -1.0)
    }
}

impl<'t> Real for Var<'t> {
    fn lift(x: f64) -> Self {
        Var::constant(x)
    }

    fn primal(&self) -> f64 {
        self.val
    }

    fn tanh_ad(self) -> Self {
        let th = self.val.tanh();
        self.unary(OpKind::Tanh, th, 1.0 - th * th)
    }

    fn sqrt_ad(self) -> Self {
        let r = self.val.sqrt();
        self.unary(OpKind::Sqrt, r, 0.5 / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Dual;

    #[test]
    fn gradient_of_product_and_quotient() {
        let tape = Tape::new();
        let x = tape.var(1.5);
        let y = tape.var(-0.5);
        let f = x * y + x / y - Var::lift(2.0) * x;
        let adj = tape.gradient(f);
        assert!((adj.wrt(&x) - (y.value() + 1.0 / y.value() - 2.0)).abs() < 1e-15);
        let dy = x.value() - x.value() / (y.value() * y.value());
        assert!((adj.wrt(&y) - dy).abs() < 1e-15);
    }

    #[test]
    fn operands_precede_consumers() {
        let tape = Tape::new();
        let x = tape.var(0.3);
        let z = (x * x).tanh_ad() + x.sqrt_ad();
        let _ = -z;
        for (i, node) in tape.nodes().iter().enumerate() {
            for &a in &node.args {
                assert!(a == NO_ARG || a < i);
            }
        }
    }

    #[test]
    fn constants_do_not_touch_the_tape() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let before = tape.len();
        let c = Var::lift(3.0) * Var::lift(4.0) + Var::lift(1.0);
        assert_eq!(c.value(), 13.0);
        assert_eq!(tape.len(), before);
        let adj = tape.gradient(x * c);
        assert_eq!(adj.wrt(&x), 13.0);
        assert_eq!(adj.wrt(&c), 0.0);
    }

    #[test]
    fn reverse_over_forward_mixed_derivative() {
        // d/dw [ d/dt tanh(w·t) ] at w = 0 is 1 for every t.
        for &t in &[0.0, 0.3, 1.0] {
            let tape = Tape::new();
            let w = tape.var(0.0);
            let input = Dual::seeded(Var::lift(t), Var::lift(1.0));
            let out = (Dual::constant(w) * input).tanh_ad();
            let adj = tape.gradient(out.tangent);
            assert!((adj.wrt(&w) - 1.0).abs() < 1e-15);
        }
    }
}
