use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use super::{Init, NnError, ParamId, ParamStore, Tape, Var};

/// Affine map `[out × in]` plus bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, inp: usize, out: usize, rng: &mut R) -> Self {
        Linear {
            w: store.add(format!("{name}.w"), out, inp, Init::Uniform, rng),
            b: store.add(format!("{name}.b"), 1, out, Init::Zeros, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        tape.affine(x, self.w, Some(self.b))
    }
}

/// Two affine layers with a ReLU in between; outputs raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inp: usize,
        hidden: usize,
        out: usize,
        rng: &mut R,
    ) -> Self {
        Mlp {
            hidden: Linear::new(store, &format!("{name}.0"), inp, hidden, rng),
            output: Linear::new(store, &format!("{name}.1"), hidden, out, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = self.hidden.forward(tape, x);
        let h = tape.relu(h);
        self.output.forward(tape, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct GruLayer {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
}

/// Stacked GRU cells; layer `l` consumes the output of layer `l - 1`.
///
/// Gate order inside the `3H` blocks is update, reset, candidate:
/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `n = tanh(W_n x + U_n (r ⊙ h) + b_n)`, `h' = (1 − z) ⊙ h + z ⊙ n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GruStack {
    layers: Vec<GruLayer>,
    input: usize,
    hidden: usize,
}

impl GruStack {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        layers: usize,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                GruLayer {
                    w_ih: store.add(format!("{name}.{l}.w_ih"), 3 * hidden, inp, Init::Uniform, rng),
                    w_hh: store.add(format!("{name}.{l}.w_hh"), 3 * hidden, hidden, Init::Uniform, rng),
                    b: store.add(format!("{name}.{l}.b"), 1, 3 * hidden, Init::Zeros, rng),
                }
            })
            .collect();
        GruStack { layers, input, hidden }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// Advances every layer by one step; returns the new per-layer states,
    /// the last of which is the stack output.
    pub fn step(&self, tape: &mut Tape, hidden: &[Var], input: Var) -> Result<Vec<Var>, NnError> {
        if hidden.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch {
                expected: [self.layers.len(), self.hidden],
                found: [hidden.len(), self.hidden],
            });
        }
        if tape.shape(input) != [1, self.input] {
            return Err(NnError::ShapeMismatch {
                expected: [1, self.input],
                found: tape.shape(input),
            });
        }
        for &h in hidden {
            if tape.shape(h) != [1, self.hidden] {
                return Err(NnError::ShapeMismatch {
                    expected: [1, self.hidden],
                    found: tape.shape(h),
                });
            }
        }
        let mut x = input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (layer, &h) in self.layers.iter().zip(hidden) {
            x = tape.gru(x, h, layer.w_ih, layer.w_hh, layer.b);
            out.push(x);
        }
        Ok(out)
    }
}
