use alloc::vec;
use alloc::vec::Vec;

use super::generate::StepKind;
use super::{edge_mask, ModelError, MolecularRnn, EDGE_CATEGORIES};
use crate::codec::BfsSequence;
use crate::element::{Element, ValencyTable, ELEMENT_COUNT};
use crate::nn::{log_softmax, Grads, ParamStore, Tape, Var};

/// How the final all-zero row is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    /// Sum over the unseen terminal atom type: `Σ_c ψ(c) Π_j φ_j(0 | c)`.
    Marginal,
    /// Condition on the atom type drawn during sampling; the type itself is not scored.
    Recorded(Element),
}

struct Pending {
    logits: Var,
    target: usize,
    mask: Option<[bool; EDGE_CATEGORIES]>,
    distance: usize,
}

/// Runs the edge stack over one row without registering loss terms.
#[allow(clippy::too_many_arguments)]
fn edge_row(
    net: &MolecularRnn,
    tape: &mut Tape,
    mut hidden: Vec<Var>,
    atom: Element,
    i: usize,
    targets: &[u8],
    atoms: &[Element],
    valence: &[u32],
    vt: Option<&ValencyTable>,
) -> Result<Vec<Pending>, ModelError> {
    let atom_var = net.atom_input(tape, atom);
    let span = i.min(net.config.window);
    let mut used_new = 0u32;
    let mut out = Vec::with_capacity(span);
    let mut prev = None;
    for j in 1..=span {
        let (h, logits) = net.edge_step(tape, &hidden, prev, atom_var)?;
        hidden = h;
        let target = targets[j - 1];
        let partner = i - j;
        let mask = vt.map(|vt| {
            edge_mask(
                used_new,
                vt.max_valence(atom) as u32,
                valence[partner],
                vt.max_valence(atoms[partner]) as u32,
            )
        });
        out.push(Pending {
            logits,
            target: target as usize,
            mask,
            distance: j,
        });
        used_new += target as u32;
        prev = Some(target);
    }
    Ok(out)
}

fn term(tape: &mut Tape, p: &Pending, weight: f64, entropy: f64) -> Result<f64, ModelError> {
    let mask = p.mask.as_ref().map(|m| &m[..]);
    if entropy != 0.0 {
        tape.entropy(p.logits, mask, entropy)?;
    }
    Ok(tape.xent(p.logits, p.target, mask, weight)?)
}

/// Teacher-forced pass over one sequence. Every scored decision adds
/// `weight(node, kind) · (−log p)` to the tape's loss. Returns `log p` of the
/// whole sequence. With `mask`, bond categories that would exceed a valence
/// are removed and the distribution renormalized, as in masked sampling.
pub fn replay(
    net: &MolecularRnn,
    tape: &mut Tape,
    seq: &BfsSequence,
    terminal: Terminal,
    mask: Option<&ValencyTable>,
    weight: &mut dyn FnMut(usize, StepKind) -> f64,
) -> Result<f64, ModelError> {
    replay_regularized(net, tape, seq, terminal, mask, weight, 0.0)
}

/// [`replay`] that also subtracts `entropy · H` of every non-terminal decision
/// (and of a recorded terminal row) from the loss.
pub fn replay_regularized(
    net: &MolecularRnn,
    tape: &mut Tape,
    seq: &BfsSequence,
    terminal: Terminal,
    mask: Option<&ValencyTable>,
    weight: &mut dyn FnMut(usize, StepKind) -> f64,
    entropy: f64,
) -> Result<f64, ModelError> {
    net.check_sequence(seq)?;
    let atoms = seq.atom_types();
    let n = atoms.len();
    let window = net.config.window;
    let mut valence = vec![0u32; n];
    let mut hidden = net.zero_node_hidden(tape);
    let zero_row = vec![0u8; window];
    let mut log_p = 0.0;
    for i in 1..=n {
        if i == n && n >= net.config.max_atoms {
            break;
        }
        let prev_row = if i == 1 { &zero_row[..] } else { seq.row(i - 1) };
        let (h, atom_logits, edge_hidden) = net.node_step(tape, &hidden, prev_row, atoms[i - 1])?;
        hidden = h;
        if i < n {
            let c = atoms[i];
            if entropy != 0.0 {
                tape.entropy(atom_logits, None, entropy)?;
            }
            log_p -= tape.xent(atom_logits, c.index(), None, weight(i, StepKind::Atom))?;
            let row = seq.row(i);
            for p in edge_row(net, tape, edge_hidden, c, i, row, atoms, &valence, mask)? {
                log_p -= term(tape, &p, weight(i, StepKind::Edge { distance: p.distance }), entropy)?;
            }
            for (d, &cat) in row.iter().enumerate().take(i.min(window)) {
                valence[i] += cat as u32;
                valence[i - 1 - d] += cat as u32;
            }
            continue;
        }
        match terminal {
            Terminal::Recorded(c) => {
                for p in edge_row(net, tape, edge_hidden, c, i, &zero_row, atoms, &valence, mask)? {
                    log_p -= term(tape, &p, weight(i, StepKind::Edge { distance: p.distance }), entropy)?;
                }
            }
            Terminal::Marginal => {
                let log_psi = log_softmax(tape.value(atom_logits), None)?;
                let mut branch_logp = [0.0; ELEMENT_COUNT];
                let mut branches = Vec::with_capacity(ELEMENT_COUNT);
                for (k, c) in Element::ALL.into_iter().enumerate() {
                    let pending = edge_row(net, tape, edge_hidden.clone(), c, i, &zero_row, atoms, &valence, mask)?;
                    branch_logp[k] = log_psi[k];
                    for p in &pending {
                        branch_logp[k] -= term(tape, p, 0.0, 0.0)?;
                    }
                    branches.push(pending);
                }
                let max = branch_logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = branch_logp.iter().map(|l| libm::exp(l - max)).sum();
                let log_total = max + libm::log(total);
                let w = weight(i, StepKind::Termination);
                if w != 0.0 {
                    // d(−log Σ e^ℓ_c) = −Σ softmax(ℓ)_c dℓ_c; the shares are
                    // treated as constants, then the loss value is corrected
                    let before = tape.loss();
                    for (k, pending) in branches.iter().enumerate() {
                        let share = w * libm::exp(branch_logp[k] - log_total);
                        tape.xent(atom_logits, k, None, share)?;
                        for p in pending {
                            term(tape, p, share, 0.0)?;
                        }
                    }
                    let surrogate = tape.loss() - before;
                    tape.offset_loss(-w * log_total - surrogate);
                }
                log_p += log_total;
            }
        }
    }
    Ok(log_p)
}

/// Number of scored decisions in a sequence: atom types, edge positions within
/// the window and, when present, the terminal row's positions.
pub fn scored_terms(seq: &BfsSequence, max_atoms: usize) -> usize {
    let n = seq.len();
    let m = seq.window();
    let edges: usize = (1..n).map(|i| i.min(m)).sum();
    let terminal = if n < max_atoms { n.min(m) } else { 0 };
    (n - 1) + edges + terminal
}

#[derive(Debug, Clone, PartialEq)]
pub struct NllOutput {
    /// Mean negative log-likelihood per molecule.
    pub loss: f64,
    /// Gradient of `loss`.
    pub grads: Grads,
    /// Scored decisions across the batch.
    pub terms: usize,
    /// Combined activation signature of every tape used.
    pub signature: u64,
}

/// Mean negative log-likelihood of a batch and its gradient.
pub fn nll(
    net: &MolecularRnn,
    params: &ParamStore,
    batch: &[BfsSequence],
    vt: &ValencyTable,
    masked: bool,
) -> Result<NllOutput, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Grads::zeros(params);
    let mut loss = 0.0;
    let mut terms = 0;
    let mut signature = 0u64;
    for seq in batch {
        let mut tape = Tape::new(params);
        let log_p = replay(net, &mut tape, seq, Terminal::Marginal, masked.then_some(vt), &mut |_, _| scale)?;
        tape.backward_into(&mut grads);
        signature = signature.rotate_left(7) ^ tape.signature();
        loss -= log_p * scale;
        terms += scored_terms(seq, net.config.max_atoms);
    }
    Ok(NllOutput {
        loss,
        grads,
        terms,
        signature,
    })
}

/// Negative log-likelihood of one sequence with its gradient.
pub fn nll_sequence(
    net: &MolecularRnn,
    params: &ParamStore,
    seq: &BfsSequence,
    vt: &ValencyTable,
    masked: bool,
) -> Result<NllOutput, ModelError> {
    nll(net, params, core::slice::from_ref(seq), vt, masked)
}

/// `log p` of a sequence without gradients.
pub fn sequence_log_prob(
    net: &MolecularRnn,
    params: &ParamStore,
    seq: &BfsSequence,
    terminal: Terminal,
    mask: Option<&ValencyTable>,
) -> Result<f64, ModelError> {
    let mut tape = Tape::new(params);
    replay(net, &mut tape, seq, terminal, mask, &mut |_, _| 0.0)
}
