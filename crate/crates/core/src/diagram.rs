//! Wire-level execution of network fragments.
//!
//! A fragment starts from a set of coarse input wires and applies gates in
//! order (renormalizers first, then couplers, then disentanglers), which is
//! the layer schedule fixed in [`crate::network`]. The result is an isometry
//! from the inputs to the output wires; splitting the outputs into kept and
//! traced wires gives the Kraus operators of a channel.

use crate::error::{mismatch, Result};
use crate::network::MeraTensors;
use crate::tensor::Tensor;

/// Local wire names inside one fragment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Wire {
    /// Left ancilla.
    A,
    /// Right ancilla.
    Ap,
    /// Input (coarse) site.
    C(usize),
    /// Output (fine) site.
    F(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    Lambda,
    Chi,
    AlphaL,
    AlphaR,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    /// Split `from` into `(to.0, to.1)`.
    Lambda { from: Wire, to: (Wire, Wire) },
    Chi(Wire, Wire),
    /// Acts on (ancilla, site).
    AlphaL(Wire, Wire),
    /// Acts on (site, ancilla).
    AlphaR(Wire, Wire),
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Lambda { .. } => GateKind::Lambda,
            Gate::Chi(..) => GateKind::Chi,
            Gate::AlphaL(..) => GateKind::AlphaL,
            Gate::AlphaR(..) => GateKind::AlphaR,
        }
    }
}

/// Tensors in operator form `(outs..., ins...)`.
#[derive(Clone, Debug)]
pub struct GateTensors {
    pub lambda: Tensor,
    pub chi: Tensor,
    pub alpha_l: Tensor,
    pub alpha_r: Tensor,
}

impl GateTensors {
    pub fn new(t: &MeraTensors) -> Result<Self> {
        Ok(Self {
            lambda: lambda_gate(&t.lambda)?,
            chi: chi_gate(&t.chi)?,
            alpha_l: alpha_l_gate(&t.alpha_l)?,
            alpha_r: alpha_r_gate(&t.alpha_r)?,
        })
    }

    pub fn get(&self, kind: GateKind) -> &Tensor {
        match kind {
            GateKind::Lambda => &self.lambda,
            GateKind::Chi => &self.chi,
            GateKind::AlphaL => &self.alpha_l,
            GateKind::AlphaR => &self.alpha_r,
        }
    }
}

/// `[u,l1,l2]` to `(l1,l2,u)`.
pub fn lambda_gate(lambda: &Tensor) -> Result<Tensor> {
    lambda.permute(&[1, 2, 0])
}

/// `[u1,u2,l1,l2]` to `(l1,l2,u1,u2)`.
pub fn chi_gate(chi: &Tensor) -> Result<Tensor> {
    chi.permute(&[2, 3, 0, 1])
}

/// `[ua,us,la,ls]` to `(la,ls,ua,us)` acting on (ancilla, site).
pub fn alpha_l_gate(alpha: &Tensor) -> Result<Tensor> {
    alpha.permute(&[2, 3, 0, 1])
}

/// `[ua,us,la,ls]` to `(ls,la,us,ua)` acting on (site, ancilla).
pub fn alpha_r_gate(alpha: &Tensor) -> Result<Tensor> {
    alpha.permute(&[3, 2, 1, 0])
}

/// Inverse of the gate-form permutations, used to turn environments back
/// into stored layout.
pub fn stored_from_gate(kind: GateKind, g: &Tensor) -> Result<Tensor> {
    match kind {
        GateKind::Lambda => g.permute(&[2, 0, 1]),
        GateKind::Chi | GateKind::AlphaL => g.permute(&[2, 3, 0, 1]),
        GateKind::AlphaR => g.permute(&[3, 2, 1, 0]),
    }
}

/// A fragment: inputs, gate list, and the kept/traced split of outputs.
#[derive(Clone, Debug)]
pub struct Diagram {
    pub inputs: Vec<Wire>,
    pub gates: Vec<Gate>,
    pub kept: Vec<Wire>,
    pub traced: Vec<Wire>,
}

/// Partially executed fragment: tensor axes are `wires...` then the input
/// axes in input order.
#[derive(Clone, Debug)]
struct Wired {
    wires: Vec<Wire>,
    t: Tensor,
}

impl Wired {
    fn pos(&self, w: Wire) -> Result<usize> {
        self.wires
            .iter()
            .position(|&x| x == w)
            .ok_or_else(|| mismatch(format!("wire {w:?} not live in fragment")))
    }

    fn apply(&mut self, gate: &Gate, op: &Tensor) -> Result<()> {
        match *gate {
            Gate::Lambda { from, to } => {
                let p = self.pos(from)?;
                self.t = self.t.apply_on_axes(op, &[p])?;
                self.wires.splice(p..=p, [to.0, to.1]);
            }
            Gate::Chi(a, b) | Gate::AlphaL(a, b) | Gate::AlphaR(a, b) => {
                let (pa, pb) = (self.pos(a)?, self.pos(b)?);
                self.t = self.t.apply_on_axes(op, &[pa, pb])?;
                // Outputs land where the first target was, in order (a, b).
                self.wires.retain(|&w| w != a && w != b);
                let insert = (0..pa).filter(|&k| k != pb).count();
                self.wires.splice(insert..insert, [a, b]);
            }
        }
        Ok(())
    }
}

impl Diagram {
    fn wire_dim(w: Wire, d: usize, m: usize) -> usize {
        match w {
            Wire::A | Wire::Ap => m,
            _ => d,
        }
    }

    pub fn input_dims(&self, d: usize, m: usize) -> Vec<usize> {
        self.inputs.iter().map(|&w| Self::wire_dim(w, d, m)).collect()
    }

    pub fn kept_dims(&self, d: usize, m: usize) -> Vec<usize> {
        self.kept.iter().map(|&w| Self::wire_dim(w, d, m)).collect()
    }

    pub fn traced_dims(&self, d: usize, m: usize) -> Vec<usize> {
        self.traced.iter().map(|&w| Self::wire_dim(w, d, m)).collect()
    }

    /// Contracts the fragment into a tensor with axes
    /// `(kept..., traced..., inputs...)`. `op_for(i, gate)` supplies the
    /// operator-form tensor for gate `i`.
    pub fn isometry_with<F>(&self, d: usize, m: usize, op_for: F) -> Result<Tensor>
    where
        F: Fn(usize, &Gate) -> Result<Tensor>,
    {
        let dims = self.input_dims(d, m);
        let din: usize = dims.iter().product();
        let mut shape = dims.clone();
        shape.extend_from_slice(&dims);
        let mut w = Wired {
            wires: self.inputs.clone(),
            t: Tensor::eye(din).reshape(&shape)?,
        };
        for (i, g) in self.gates.iter().enumerate() {
            let op = op_for(i, g)?;
            w.apply(g, &op)?;
        }
        let nin = self.inputs.len();
        let nw = w.wires.len();
        if nw != self.kept.len() + self.traced.len() {
            return Err(mismatch(format!(
                "fragment outputs {:?} do not match kept {:?} + traced {:?}",
                w.wires, self.kept, self.traced
            )));
        }
        let mut order = Vec::with_capacity(nw + nin);
        for x in self.kept.iter().chain(self.traced.iter()) {
            order.push(w.pos(*x)?);
        }
        order.extend(nw..nw + nin);
        w.t.permute(&order)
    }

    pub fn isometry(&self, g: &GateTensors, d: usize, m: usize) -> Result<Tensor> {
        self.isometry_with(d, m, |_, gate| Ok(g.get(gate.kind()).clone()))
    }
}

/// Fragments of one layer. Coarse inputs `C(s)` are split by `lambda` into
/// `F(2s)`, `F(2s+1)`; indices are local to each fragment.
pub mod fragments {
    use super::Wire::*;
    use super::*;

    fn split(s: usize) -> Gate {
        Gate::Lambda {
            from: C(s),
            to: (F(2 * s), F(2 * s + 1)),
        }
    }

    /// Bulk triple: coarse `C0..C2` to fine `F0..F5`, disentanglers on
    /// `(F1,F2)`, `(F3,F4)`. `left` keeps `F1..F3` (even fine start),
    /// otherwise `F2..F4`.
    pub fn descend(left: bool) -> Diagram {
        let gates = vec![split(0), split(1), split(2), Gate::Chi(F(1), F(2)), Gate::Chi(F(3), F(4))];
        let (kept, traced) = if left {
            (vec![F(1), F(2), F(3)], vec![F(0), F(4), F(5)])
        } else {
            (vec![F(2), F(3), F(4)], vec![F(0), F(1), F(5)])
        };
        Diagram {
            inputs: vec![C(0), C(1), C(2)],
            gates,
            kept,
            traced,
        }
    }

    /// Left edge: `(A, C0, C1)` to fine `A, F0..F3` with the coupler on
    /// `(A, F0)` and a disentangler on `(F1, F2)`. `absorb` keeps the bulk
    /// triple `F0..F2`; otherwise the edge block `(A, F0, F1)`.
    pub fn left_edge(absorb: bool) -> Diagram {
        let gates = vec![split(0), split(1), Gate::AlphaL(A, F(0)), Gate::Chi(F(1), F(2))];
        let (kept, traced) = if absorb {
            (vec![F(0), F(1), F(2)], vec![A, F(3)])
        } else {
            (vec![A, F(0), F(1)], vec![F(2), F(3)])
        };
        Diagram {
            inputs: vec![A, C(0), C(1)],
            gates,
            kept,
            traced,
        }
    }

    /// Mirror of [`left_edge`]: `(C0, C1, A')` to `F0..F3, A'`.
    pub fn right_edge(absorb: bool) -> Diagram {
        let gates = vec![split(0), split(1), Gate::AlphaR(F(3), Ap), Gate::Chi(F(1), F(2))];
        let (kept, traced) = if absorb {
            (vec![F(1), F(2), F(3)], vec![F(0), Ap])
        } else {
            (vec![F(2), F(3), Ap], vec![F(0), F(1)])
        };
        Diagram {
            inputs: vec![C(0), C(1), Ap],
            gates,
            kept,
            traced,
        }
    }

    /// Four coarse sites to the four fine sites `F2..F5` (odd fine start).
    pub fn four_site() -> Diagram {
        Diagram {
            inputs: vec![C(0), C(1), C(2), C(3)],
            gates: vec![
                split(0),
                split(1),
                split(2),
                split(3),
                Gate::Chi(F(1), F(2)),
                Gate::Chi(F(3), F(4)),
                Gate::Chi(F(5), F(6)),
            ],
            kept: vec![F(2), F(3), F(4), F(5)],
            traced: vec![F(0), F(1), F(6), F(7)],
        }
    }

    /// Four coarse sites to the six fine sites `F1..F6` (even fine start).
    pub fn four_to_six() -> Diagram {
        Diagram {
            inputs: vec![C(0), C(1), C(2), C(3)],
            gates: vec![
                split(0),
                split(1),
                split(2),
                split(3),
                Gate::Chi(F(1), F(2)),
                Gate::Chi(F(3), F(4)),
                Gate::Chi(F(5), F(6)),
            ],
            kept: vec![F(1), F(2), F(3), F(4), F(5), F(6)],
            traced: vec![F(0), F(7)],
        }
    }
}
