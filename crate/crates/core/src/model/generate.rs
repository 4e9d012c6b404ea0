use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{edge_mask, ModelError, MolecularRnn, EDGE_CATEGORIES};
use crate::codec::BfsSequence;
use crate::element::{BondOrder, Element, ValencyTable};
use crate::graph::MolGraph;
use crate::nn::{log_softmax, ParamStore, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StepKind {
    Atom,
    /// Bond category towards the atom `distance` positions back.
    Edge { distance: usize },
    /// The whole terminal row with its atom type summed out.
    Termination,
}

/// A categorical distribution offered at one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub kind: StepKind,
    /// Log-probabilities; masked categories are `-inf`.
    pub log_probs: Vec<f64>,
    pub masked: bool,
}

impl StepDistribution {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|&l| libm::exp(l)).collect()
    }
}

/// One decision taken during generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// Position of the atom being generated (1-based; 0 is the fixed carbon).
    pub node: usize,
    pub kind: StepKind,
    pub category: u8,
    pub log_prob: f64,
    /// The bond pushed an endpoint past its valence.
    pub violation: bool,
    /// Fixed reward replacing the discounted terminal reward at this step.
    pub reward_override: Option<f64>,
}

/// One generation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Sample index; selects the random stream.
    pub index: u64,
    pub steps: Vec<Step>,
    /// Committed atoms and rows; the terminal row is not part of it.
    pub sequence: BfsSequence,
    /// Atom type drawn for the terminal node; `None` when generation hit the atom limit.
    pub terminal_atom: Option<Element>,
    pub graph: MolGraph,
    /// Atoms whose valence was exceeded, sorted.
    pub violations: Vec<usize>,
    pub masked: bool,
    pub reward: f64,
}

impl Trajectory {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty() && self.graph.is_connected()
    }

    pub fn log_prob(&self) -> f64 {
        self.steps.iter().map(|s| s.log_prob).sum()
    }

    /// Node-level steps: one per added atom plus the terminal row.
    pub fn node_steps(&self) -> usize {
        self.sequence.len() - 1 + usize::from(self.terminal_atom.is_some())
    }

    pub fn below_min(&self, min_atoms: usize) -> bool {
        self.graph.atom_count() < min_atoms
    }
}

/// Result of running the edge stack over one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDraw {
    pub categories: Vec<u8>,
    pub distributions: Vec<StepDistribution>,
    pub violations: Vec<bool>,
}

impl RowDraw {
    pub fn is_terminal(&self) -> bool {
        self.categories.iter().all(|&c| c == 0)
    }

    pub fn log_probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.categories
            .iter()
            .zip(&self.distributions)
            .map(|(&c, d)| d.log_probs[c as usize])
    }
}

/// Incremental generator shared by sampling and probing.
pub struct Generator<'a> {
    net: &'a MolecularRnn,
    tape: Tape<'a>,
    vt: &'a ValencyTable,
    masked: bool,
    hidden: Vec<Var>,
    atoms: Vec<Element>,
    rows: Vec<u8>,
    valence: Vec<u32>,
    graph: MolGraph,
    pending: Option<(Var, Vec<Var>)>,
}

impl<'a> Generator<'a> {
    /// Starts from a single carbon atom.
    pub fn new(net: &'a MolecularRnn, params: &'a ParamStore, vt: &'a ValencyTable, masked: bool) -> Self {
        let mut tape = Tape::new(params);
        let hidden = net.zero_node_hidden(&mut tape);
        let mut graph = MolGraph::new();
        graph.add_atom(Element::C);
        Generator {
            net,
            tape,
            vt,
            masked,
            hidden,
            atoms: vec![Element::C],
            rows: Vec::new(),
            valence: vec![0],
            graph,
            pending: None,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_full(&self) -> bool {
        self.atoms.len() >= self.net.config.max_atoms
    }

    pub fn graph(&self) -> &MolGraph {
        &self.graph
    }

    fn ensure_node_step(&mut self) -> Result<(Var, Vec<Var>), ModelError> {
        if let Some(p) = &self.pending {
            return Ok(p.clone());
        }
        let window = self.net.config.window;
        let i = self.atoms.len();
        let zero = vec![0u8; window];
        let prev_row = if i == 1 { &zero[..] } else { &self.rows[(i - 2) * window..(i - 1) * window] };
        let (hidden, logits, edge_hidden) = self.net.node_step(&mut self.tape, &self.hidden, prev_row, self.atoms[i - 1])?;
        self.hidden = hidden;
        self.pending = Some((logits, edge_hidden));
        Ok(self.pending.clone().expect("just set"))
    }

    /// Distribution over the type of the next atom.
    pub fn atom_distribution(&mut self) -> Result<StepDistribution, ModelError> {
        let (logits, _) = self.ensure_node_step()?;
        Ok(StepDistribution {
            kind: StepKind::Atom,
            log_probs: log_softmax(self.tape.value(logits), None)?,
            masked: false,
        })
    }

    /// Runs the edge stack for a candidate atom of type `atom`, letting
    /// `choose` pick each category. Leaves the committed state untouched.
    pub fn edge_row(
        &mut self,
        atom: Element,
        choose: &mut dyn FnMut(&StepDistribution) -> u8,
    ) -> Result<RowDraw, ModelError> {
        let (_, mut hidden) = self.ensure_node_step()?;
        let net = self.net;
        let i = self.atoms.len();
        let span = i.min(net.config.window);
        let atom_var = net.atom_input(&mut self.tape, atom);
        let limit = self.vt.max_valence(atom) as u32;
        let mut used = 0u32;
        let mut partner_used: Vec<u32> = (1..=span).map(|j| self.valence[i - j]).collect();
        let mut draw = RowDraw {
            categories: Vec::with_capacity(span),
            distributions: Vec::with_capacity(span),
            violations: Vec::with_capacity(span),
        };
        let mut prev = None;
        for j in 1..=span {
            let (h, logits) = net.edge_step(&mut self.tape, &hidden, prev, atom_var)?;
            hidden = h;
            let partner_limit = self.vt.max_valence(self.atoms[i - j]) as u32;
            let allowed = edge_mask(used, limit, partner_used[j - 1], partner_limit);
            let dist = StepDistribution {
                kind: StepKind::Edge { distance: j },
                log_probs: log_softmax(self.tape.value(logits), self.masked.then_some(&allowed[..]))?,
                masked: self.masked,
            };
            let cat = choose(&dist);
            if cat as usize >= EDGE_CATEGORIES || dist.log_probs[cat as usize] == f64::NEG_INFINITY {
                return Err(ModelError::Malformed("chosen bond category is not allowed"));
            }
            draw.violations.push(!allowed[cat as usize]);
            used += cat as u32;
            partner_used[j - 1] += cat as u32;
            draw.categories.push(cat);
            draw.distributions.push(dist);
            prev = Some(cat);
        }
        Ok(draw)
    }

    /// Appends an atom and its edge row.
    pub fn commit(&mut self, atom: Element, row: &RowDraw) {
        let window = self.net.config.window;
        let i = self.atoms.len();
        let idx = self.graph.add_atom(atom);
        debug_assert_eq!(idx, i);
        self.atoms.push(atom);
        self.valence.push(0);
        let mut padded = vec![0u8; window];
        for (d, &cat) in row.categories.iter().enumerate() {
            padded[d] = cat;
            if let Some(order) = BondOrder::from_category(cat) {
                let partner = i - 1 - d;
                self.graph.add_bond(i, partner, order).expect("fresh atom bonds once per partner");
                self.valence[i] += cat as u32;
                self.valence[partner] += cat as u32;
            }
        }
        self.rows.extend_from_slice(&padded);
        self.pending = None;
    }

    pub fn sequence(&self) -> BfsSequence {
        BfsSequence::new(self.net.config.window, self.atoms.clone(), self.rows.clone())
            .expect("generator keeps rows well formed")
    }
}

fn draw<R: Rng>(dist: &StepDistribution, rng: &mut R) -> u8 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &lp) in dist.log_probs.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        acc += libm::exp(lp);
        last = k;
        if u < acc {
            return k as u8;
        }
    }
    last as u8
}

/// Draws sample `index` of the stream family keyed by `seed`.
pub fn sample_one(
    net: &MolecularRnn,
    params: &ParamStore,
    vt: &ValencyTable,
    masked: bool,
    seed: u64,
    index: u64,
) -> Result<Trajectory, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut gen = Generator::new(net, params, vt, masked);
    let mut steps = Vec::new();
    let mut terminal_atom = None;
    while !gen.is_full() {
        let node = gen.atom_count();
        let atom_dist = gen.atom_distribution()?;
        let c = draw(&atom_dist, &mut rng);
        let atom = Element::from_index(c as usize).expect("atom category in range");
        let row = gen.edge_row(atom, &mut |d| draw(d, &mut rng))?;
        if row.is_terminal() {
            terminal_atom = Some(atom);
        } else {
            steps.push(Step {
                node,
                kind: StepKind::Atom,
                category: c,
                log_prob: atom_dist.log_probs[c as usize],
                violation: false,
                reward_override: None,
            });
        }
        for (d, (&cat, dist)) in row.categories.iter().zip(&row.distributions).enumerate() {
            steps.push(Step {
                node,
                kind: StepKind::Edge { distance: d + 1 },
                category: cat,
                log_prob: dist.log_probs[cat as usize],
                violation: row.violations[d],
                reward_override: None,
            });
        }
        if terminal_atom.is_some() {
            break;
        }
        gen.commit(atom, &row);
    }
    let graph = gen.graph().clone();
    let violations = graph.valency_violations(vt);
    Ok(Trajectory {
        index,
        steps,
        sequence: gen.sequence(),
        terminal_atom,
        graph,
        violations,
        masked,
        reward: 0.0,
    })
}

/// Draws samples `0..count`; sample `k` depends only on `seed` and `k`.
pub fn sample(
    net: &MolecularRnn,
    params: &ParamStore,
    count: usize,
    vt: &ValencyTable,
    masked: bool,
    seed: u64,
) -> Result<Vec<Trajectory>, ModelError> {
    (0..count as u64)
        .map(|k| sample_one(net, params, vt, masked, seed, k))
        .collect()
}

/// Step-by-step distributions a molecule's categories were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    /// Each non-terminal decision with the category taken.
    pub steps: Vec<(StepDistribution, u8)>,
    /// Atom-type distribution at the terminal node and, per candidate type, the
    /// distributions of its all-zero row.
    pub terminal: Option<(StepDistribution, Vec<Vec<StepDistribution>>)>,
}

/// Forces the generator through `seq`, collecting every distribution offered.
pub fn probe(
    net: &MolecularRnn,
    params: &ParamStore,
    seq: &BfsSequence,
    vt: &ValencyTable,
    masked: bool,
) -> Result<Probe, ModelError> {
    net.check_sequence(seq)?;
    let mut gen = Generator::new(net, params, vt, masked);
    let mut steps = Vec::new();
    for i in 1..seq.len() {
        let atom = seq.atom_types()[i];
        let dist = gen.atom_distribution()?;
        steps.push((dist, atom.index() as u8));
        let row = seq.row(i);
        let draw = gen.edge_row(atom, &mut |d| match d.kind {
            StepKind::Edge { distance } => row[distance - 1],
            _ => 0,
        })?;
        for (d, &cat) in draw.distributions.iter().zip(&draw.categories) {
            steps.push((d.clone(), cat));
        }
        gen.commit(atom, &draw);
    }
    let terminal = if gen.is_full() {
        None
    } else {
        let atom = gen.atom_distribution()?;
        let mut rows = Vec::new();
        for c in Element::ALL {
            rows.push(gen.edge_row(c, &mut |_| 0)?.distributions);
        }
        Some((atom, rows))
    };
    Ok(Probe { steps, terminal })
}
