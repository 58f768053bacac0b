//! Straight-line evaluation of several expressions with shared
//! subexpressions computed once.

use std::collections::HashMap;

use super::{EvalError, Expr, Func, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    Const(u64),
    Var(u32),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, i32),
    Call(Func, u32),
}

#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<u32>,
    arity: usize,
}

struct Builder {
    ops: Vec<Op>,
    dedup: HashMap<Op, u32>,
    by_ptr: HashMap<*const Node, u32>,
}

impl Builder {
    fn push(&mut self, op: Op) -> u32 {
        if let Some(&slot) = self.dedup.get(&op) {
            return slot;
        }
        let slot = self.ops.len() as u32;
        self.ops.push(op);
        self.dedup.insert(op, slot);
        slot
    }

    fn lower(&mut self, e: &Expr) -> u32 {
        let key: *const Node = e.node();
        if let Some(&slot) = self.by_ptr.get(&key) {
            return slot;
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(c.to_bits()),
            Node::Var(i) => Op::Var(*i as u32),
            Node::Neg(a) => Op::Neg(self.lower(a)),
            Node::Add(a, b) => {
                let (x, y) = (self.lower(a), self.lower(b));
                Op::Add(x.min(y), x.max(y))
            }
            Node::Sub(a, b) => Op::Sub(self.lower(a), self.lower(b)),
            Node::Mul(a, b) => {
                let (x, y) = (self.lower(a), self.lower(b));
                Op::Mul(x.min(y), x.max(y))
            }
            Node::Div(a, b) => Op::Div(self.lower(a), self.lower(b)),
            Node::Pow(a, k) => Op::Pow(self.lower(a), *k),
            Node::Call(f, a) => Op::Call(*f, self.lower(a)),
        };
        let slot = self.push(op);
        self.by_ptr.insert(key, slot);
        slot
    }
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Tape {
        let mut b = Builder { ops: Vec::new(), dedup: HashMap::new(), by_ptr: HashMap::new() };
        let outputs = exprs.iter().map(|e| b.lower(e)).collect();
        let arity = exprs.iter().map(Expr::arity).max().unwrap_or(0);
        Tape { ops: b.ops, outputs, arity }
    }

    pub fn len_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluates all outputs at `t`, using `scratch` as the register file.
    pub fn eval_into(&self, t: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<(), EvalError> {
        if t.len() < self.arity {
            return Err(EvalError::UnboundVariable(self.arity, t.len()));
        }
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let r = |i: u32| scratch[i as usize];
            let v = match *op {
                Op::Const(bits) => f64::from_bits(bits),
                Op::Var(i) => t[i as usize],
                Op::Neg(a) => -r(a),
                Op::Add(a, b) => r(a) + r(b),
                Op::Sub(a, b) => r(a) - r(b),
                Op::Mul(a, b) => r(a) * r(b),
                Op::Div(a, b) => {
                    let d = r(b);
                    if d == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    r(a) / d
                }
                Op::Pow(a, k) => {
                    let base = r(a);
                    if base == 0.0 && k < 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    base.powi(k)
                }
                Op::Call(f, a) => f.apply(r(a))?,
            };
            scratch.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot as usize];
        }
        Ok(())
    }

    pub fn eval(&self, t: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(t, &mut scratch, &mut out)?;
        Ok(out)
    }
}
