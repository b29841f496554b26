//! Signal-gated traffic reservoir on a directed lattice.
//!
//! Every node is a signalised intersection. Every pair of neighbouring nodes is
//! joined by two directed links, one per travel direction, and the state of
//! the reservoir is the (real-valued) number of vehicles waiting on each link.
//! A link whose signal shows *go* releases its whole load, which is spread over
//! the straight, left and right out-going links of its head node according to a
//! fixed random transition matrix. A link showing *stop* keeps its load.
//!
//! ```text
//! next = W · (g ⊙ counts) + (1 − g) ⊙ counts
//! ```
//!
//! With torus wrap the column sums of `W` are one, so the total number of
//! vehicles never changes.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, FORMAT_VERSION};

/// Compass side of an intersection from which a link arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "n")]
    North,
    #[serde(rename = "s")]
    South,
    #[serde(rename = "e")]
    East,
    #[serde(rename = "w")]
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    pub fn letter(self) -> char {
        match self {
            Direction::North => 'n',
            Direction::South => 's',
            Direction::East => 'e',
            Direction::West => 'w',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'n' => Some(Direction::North),
            's' => Some(Direction::South),
            'e' => Some(Direction::East),
            'w' => Some(Direction::West),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Direction::North | Direction::South => Axis::NorthSouth,
            Direction::East | Direction::West => Axis::EastWest,
        }
    }

    /// Row/column step taken when travelling towards this side.
    fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (-1, 0),
            Direction::South => (1, 0),
            Direction::East => (0, 1),
            Direction::West => (0, -1),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    NorthSouth,
    EastWest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Go,
    Stop,
}

/// Periodic signal of one intersection.
///
/// The phase advances by `tau` radians per step. East–west approaches see the
/// phase shifted by `axis_offset`, so with the default offset of π the two axes
/// alternate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub theta0: f64,
    pub tau: f64,
    pub axis_offset: f64,
}

impl SignalSpec {
    pub fn new(theta0: f64, tau: f64, axis_offset: f64) -> Result<Self> {
        let spec = Self {
            theta0,
            tau,
            axis_offset,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Signal with period `period` steps.
    pub fn with_period(theta0: f64, period: f64) -> Result<Self> {
        Self::new(theta0, TAU / period, PI)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "signal rate must be positive, got {}",
                self.tau
            )));
        }
        for (name, v) in [("theta0", self.theta0), ("axis_offset", self.axis_offset)] {
            if !(0.0..TAU).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 2π), got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        TAU / self.tau
    }

    pub fn gate(&self, step: u64, axis: Axis) -> Gate {
        signal_gate(self, step, axis)
    }
}

/// Go iff `π > (θ0 + τ·step + axis phase) mod 2π > 0`.
pub fn signal_gate(spec: &SignalSpec, step: u64, axis: Axis) -> Gate {
    let axis_phase = match axis {
        Axis::NorthSouth => 0.0,
        Axis::EastWest => spec.axis_offset,
    };
    let phase = (spec.theta0 + spec.tau * step as f64 + axis_phase).rem_euclid(TAU);
    if phase > 0.0 && phase < PI {
        Gate::Go
    } else {
        Gate::Stop
    }
}

/// How per-node signals are drawn when a lattice is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTemplate {
    /// Shortest signal period in steps.
    pub min_period: f64,
    /// Longest signal period in steps.
    pub max_period: f64,
    /// Fixed catalogue of periods to pick from. When non-empty it replaces the
    /// `[min_period, max_period]` range, so several nodes share a timing plan.
    #[serde(default)]
    pub period_choices: Vec<f64>,
    pub axis_offset: f64,
    /// Draw each node's initial phase uniformly; otherwise every node starts at `theta0`.
    pub random_phase: bool,
    pub theta0: f64,
}

impl Default for SignalTemplate {
    fn default() -> Self {
        Self {
            min_period: 8.0,
            max_period: 24.0,
            period_choices: Vec::new(),
            axis_offset: PI,
            random_phase: true,
            theta0: 0.0,
        }
    }
}

impl SignalTemplate {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_period.is_finite() && self.min_period > 0.0)
            || !(self.max_period.is_finite() && self.max_period >= self.min_period)
        {
            return Err(Error::InvalidParameter(format!(
                "signal periods must satisfy 0 < min ≤ max, got [{}, {}]",
                self.min_period, self.max_period
            )));
        }
        for &p in &self.period_choices {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidParameter(format!("signal period must be positive, got {p}")));
            }
            SignalSpec::new(self.theta0, TAU / p, self.axis_offset)?;
        }
        SignalSpec::new(self.theta0, TAU / self.min_period, self.axis_offset).map(|_| ())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> SignalSpec {
        let period = if !self.period_choices.is_empty() {
            self.period_choices[rng.gen_range(0..self.period_choices.len())]
        } else if self.max_period > self.min_period {
            rng.gen_range(self.min_period..=self.max_period)
        } else {
            self.min_period
        };
        let theta0 = if self.random_phase {
            rng.gen_range(0.0..TAU)
        } else {
            self.theta0
        };
        SignalSpec {
            theta0,
            tau: TAU / period,
            axis_offset: self.axis_offset,
        }
    }
}

/// A directed road segment ending at the stop line of `head`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: usize,
    pub tail: usize,
    pub head: usize,
    /// Side of `head` the link arrives from.
    pub approach: Direction,
}

/// One non-zero entry of the transition matrix: share of the load released
/// from link `from` that moves onto link `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub to: usize,
    pub from: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub rows: usize,
    pub cols: usize,
    pub torus: bool,
    pub signals: SignalTemplate,
    pub seed: u64,
}

impl LatticeConfig {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Self {
        Self {
            rows,
            cols,
            torus: true,
            signals: SignalTemplate::default(),
            seed,
        }
    }

    pub fn build(&self) -> Result<LatticeNetwork> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::Dimension(format!(
                "lattice needs at least 2×2 nodes, got {}×{}",
                self.rows, self.cols
            )));
        }
        self.signals.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        let n_nodes = self.rows * self.cols;
        let mut links = Vec::with_capacity(4 * n_nodes);
        // out_link[node][dir] = id of the link leaving `node` towards `dir`
        let mut out_link = vec![[None; 4]; n_nodes];
        for node in 0..n_nodes {
            for (d, dir) in Direction::ALL.iter().enumerate() {
                if let Some(head) = self.neighbour(node, *dir) {
                    let id = links.len();
                    links.push(Link {
                        id,
                        tail: node,
                        head,
                        approach: dir.opposite(),
                    });
                    out_link[node][d] = Some(id);
                }
            }
        }

        let mut transitions = Vec::with_capacity(3 * links.len());
        for link in &links {
            // straight, left and right all exist as directions; a missing
            // out-link (open boundary) means that share leaves the network
            let choices: Vec<Option<usize>> = Direction::ALL
                .iter()
                .enumerate()
                .filter(|(_, d)| **d != link.approach)
                .map(|(d, _)| out_link[link.head][d])
                .collect();
            let raw: Vec<f64> = choices
                .iter()
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = raw.iter().sum();
            let mut probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let head_sum: f64 = probs[..probs.len() - 1].iter().sum();
            let last = probs.len() - 1;
            probs[last] = (1.0 - head_sum).max(0.0);
            for (to, prob) in choices.into_iter().zip(probs) {
                if let Some(to) = to {
                    if prob > 0.0 {
                        transitions.push(Transition {
                            to,
                            from: link.id,
                            prob,
                        });
                    }
                }
            }
        }

        let signals = (0..n_nodes).map(|_| self.signals.draw(&mut rng)).collect();

        Ok(LatticeNetwork {
            format_version: FORMAT_VERSION,
            rows: self.rows,
            cols: self.cols,
            torus: self.torus,
            seed: self.seed,
            links,
            transitions,
            signals,
        })
    }

    fn neighbour(&self, node: usize, dir: Direction) -> Option<usize> {
        let (r, c) = ((node / self.cols) as isize, (node % self.cols) as isize);
        let (dr, dc) = dir.delta();
        let (mut nr, mut nc) = (r + dr, c + dc);
        let (rows, cols) = (self.rows as isize, self.cols as isize);
        if self.torus {
            nr = nr.rem_euclid(rows);
            nc = nc.rem_euclid(cols);
        } else if !(0..rows).contains(&nr) || !(0..cols).contains(&nc) {
            return None;
        }
        Some((nr * cols + nc) as usize)
    }
}

/// Torus lattice with signals drawn from `template`.
pub fn build_lattice(
    rows: usize,
    cols: usize,
    template: &SignalTemplate,
    seed: u64,
) -> Result<LatticeNetwork> {
    LatticeConfig {
        rows,
        cols,
        torus: true,
        signals: template.clone(),
        seed,
    }
    .build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeNetwork {
    pub format_version: u32,
    pub rows: usize,
    pub cols: usize,
    pub torus: bool,
    pub seed: u64,
    pub links: Vec<Link>,
    /// Sparse transition matrix, grouped by source link.
    pub transitions: Vec<Transition>,
    /// One signal per node, indexed by node.
    pub signals: Vec<SignalSpec>,
}

impl LatticeNetwork {
    pub fn n_nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// Intersection number used in series names (1-based, row-major).
    pub fn node_label(node: usize) -> String {
        (node + 1).to_string()
    }

    /// Series name of a link, e.g. `5e` for the link entering node 5 from the east.
    pub fn series_name(&self, link: usize) -> String {
        let l = &self.links[link];
        format!("{}{}", Self::node_label(l.head), l.approach.letter())
    }

    pub fn link_by_series(&self, name: &str) -> Option<usize> {
        (0..self.links.len()).find(|&i| self.series_name(i) == name)
    }

    /// Dense copy of the transition matrix, `dense[to][from]`.
    pub fn dense_transition(&self) -> Vec<Vec<f64>> {
        let n = self.n_links();
        let mut w = vec![vec![0.0; n]; n];
        for t in &self.transitions {
            w[t.to][t.from] += t.prob;
        }
        w
    }

    /// Per-link release gates at `step`.
    pub fn gates(&self, step: u64) -> Vec<Gate> {
        self.links
            .iter()
            .map(|l| signal_gate(&self.signals[l.head], step, l.approach.axis()))
            .collect()
    }

    /// Replaces every node's signal (used to model a change of signal plans).
    pub fn with_signals(&self, signals: Vec<SignalSpec>) -> Result<Self> {
        if signals.len() != self.n_nodes() {
            return Err(Error::Dimension(format!(
                "expected {} signals, got {}",
                self.n_nodes(),
                signals.len()
            )));
        }
        for s in &signals {
            s.validate()?;
        }
        Ok(Self {
            signals,
            ..self.clone()
        })
    }

    pub fn step(&self, state: &TrafficState) -> Result<(TrafficState, Vec<f64>)> {
        let n = self.n_links();
        if state.counts.len() != n {
            return Err(Error::Dimension(format!(
                "state has {} entries, network has {} links",
                state.counts.len(),
                n
            )));
        }
        let gates = self.gates(state.step);
        let mut released = vec![0.0; n];
        let mut next = vec![0.0; n];
        for (i, gate) in gates.iter().enumerate() {
            match gate {
                Gate::Go => released[i] = state.counts[i],
                Gate::Stop => next[i] = state.counts[i],
            }
        }
        for t in &self.transitions {
            next[t.to] += t.prob * released[t.from];
        }
        Ok((
            TrafficState {
                counts: next,
                step: state.step + 1,
            },
            released,
        ))
    }

    pub fn simulate(
        &self,
        init: &TrafficState,
        steps: usize,
        seconds_per_step: f64,
    ) -> Result<Simulation> {
        if steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if !(seconds_per_step.is_finite() && seconds_per_step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "seconds_per_step must be positive, got {seconds_per_step}"
            )));
        }
        // records within a step are emitted in (node label, direction letter) order
        let mut order: Vec<usize> = (0..self.n_links()).collect();
        order.sort_by_key(|&i| {
            let l = &self.links[i];
            (Self::node_label(l.head), l.approach.letter())
        });

        let mut trajectory = Vec::with_capacity(steps + 1);
        let mut released_all = Vec::with_capacity(steps);
        let mut records = Vec::new();
        trajectory.push(init.clone());
        for _ in 0..steps {
            let current = trajectory.last().expect("trajectory starts non-empty");
            let time_s = current.step as f64 * seconds_per_step;
            let (next, released) = self.step(current)?;
            for &i in &order {
                if released[i] > 0.0 {
                    let l = &self.links[i];
                    records.push(CrossingRecord {
                        time_s,
                        node_id: Self::node_label(l.head),
                        direction: l.approach,
                        count: released[i],
                    });
                }
            }
            trajectory.push(next);
            released_all.push(released);
        }
        Ok(Simulation {
            trajectory,
            released: released_all,
            log: CrossingLog { records },
        })
    }

    /// Checks the structural invariants of a (possibly deserialised) network.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_links();
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::Dimension("lattice needs at least 2×2 nodes".into()));
        }
        if self.signals.len() != self.n_nodes() {
            return Err(Error::Dimension("one signal per node required".into()));
        }
        for s in &self.signals {
            s.validate()?;
        }
        for (i, l) in self.links.iter().enumerate() {
            if l.id != i || l.tail >= self.n_nodes() || l.head >= self.n_nodes() {
                return Err(Error::Dimension(format!("malformed link entry {i}")));
            }
        }
        let mut col_sum = vec![0.0; n];
        let mut col_nnz = vec![0usize; n];
        let mut row_nnz = vec![0usize; n];
        for t in &self.transitions {
            if t.to >= n || t.from >= n || !(0.0..=1.0).contains(&t.prob) {
                return Err(Error::InvalidParameter(format!(
                    "bad transition entry ({}, {}, {})",
                    t.to, t.from, t.prob
                )));
            }
            if self.links[t.from].head != self.links[t.to].tail {
                return Err(Error::InvalidParameter(format!(
                    "transition {} -> {} does not pass through a shared node",
                    t.from, t.to
                )));
            }
            col_sum[t.from] += t.prob;
            col_nnz[t.from] += 1;
            row_nnz[t.to] += 1;
        }
        for i in 0..n {
            if col_nnz[i] > 3 || row_nnz[i] > 3 {
                return Err(Error::InvalidParameter(format!(
                    "link {i} has more than three transition entries"
                )));
            }
            if self.torus && (col_sum[i] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "out-going probabilities of link {i} sum to {}",
                    col_sum[i]
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficState {
    pub counts: Vec<f64>,
    pub step: u64,
}

impl TrafficState {
    pub fn uniform(net: &LatticeNetwork, per_link: f64) -> Self {
        Self {
            counts: vec![per_link; net.n_links()],
            step: 0,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingRecord {
    pub time_s: f64,
    pub node_id: String,
    pub direction: Direction,
    pub count: f64,
}

impl CrossingRecord {
    pub fn series(&self) -> String {
        format!("{}{}", self.node_id, self.direction.letter())
    }
}

/// Stop-line crossings, sorted by time then (node label, direction letter).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrossingLog {
    pub records: Vec<CrossingRecord>,
}

impl CrossingLog {
    /// Writes the event CSV (`time_s,series,count`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "series", "count"])?;
        for r in &self.records {
            w.write_record([r.time_s.to_string(), r.series(), r.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// States `0..=steps`, including the initial one.
    pub trajectory: Vec<TrafficState>,
    /// Load released by every link at each step.
    pub released: Vec<Vec<f64>>,
    pub log: CrossingLog,
}

impl Simulation {
    /// Trajectory CSV: `step` followed by one column per link.
    pub fn write_trajectory_csv<W: Write>(&self, net: &LatticeNetwork, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend(net.links.iter().map(|l| {
            format!(
                "{}>{}{}",
                LatticeNetwork::node_label(l.tail),
                LatticeNetwork::node_label(l.head),
                l.approach.letter()
            )
        }));
        w.write_record(&header)?;
        for s in &self.trajectory {
            let mut row = vec![s.step.to_string()];
            row.extend(s.counts.iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_net(rows: usize, cols: usize, seed: u64) -> LatticeNetwork {
        build_lattice(rows, cols, &SignalTemplate::default(), seed).unwrap()
    }

    #[test]
    fn two_by_two_torus_has_sixteen_links() {
        let net = default_net(2, 2, 1);
        assert_eq!(net.n_links(), 16);
        net.validate().unwrap();
    }

    #[test]
    fn columns_sum_to_one_exhaustively() {
        let net = default_net(2, 2, 1);
        let w = net.dense_transition();
        for from in 0..net.n_links() {
            let col: Vec<f64> = (0..net.n_links()).map(|to| w[to][from]).collect();
            let nnz = col.iter().filter(|&&p| p != 0.0).count();
            assert!(nnz <= 3, "column {from} has {nnz} entries");
            assert!(col.iter().all(|&p| (0.0..=1.0).contains(&p)));
            let sum: f64 = col.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "column {from} sums to {sum}");
        }
        for row in &w {
            assert!(row.iter().filter(|&&p| p != 0.0).count() <= 3);
        }
    }

    #[test]
    fn no_u_turns_and_one_link_per_side() {
        let net = default_net(3, 4, 5);
        for t in &net.transitions {
            let (from, to) = (net.links[t.from], net.links[t.to]);
            assert_eq!(from.head, to.tail);
            // leaving back towards the side it came from is a U-turn
            assert_ne!(to.approach.opposite(), from.approach);
        }
        for node in 0..net.n_nodes() {
            for dir in Direction::ALL {
                let ins = net
                    .links
                    .iter()
                    .filter(|l| l.head == node && l.approach == dir)
                    .count();
                let outs = net
                    .links
                    .iter()
                    .filter(|l| l.tail == node && l.approach == dir.opposite())
                    .count();
                assert_eq!((ins, outs), (1, 1));
            }
        }
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        assert_eq!(default_net(3, 3, 7), default_net(3, 3, 7));
        assert_ne!(default_net(3, 3, 7), default_net(3, 3, 8));
    }

    #[test]
    fn small_lattices_are_rejected() {
        assert!(matches!(
            build_lattice(1, 3, &SignalTemplate::default(), 0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            build_lattice(3, 1, &SignalTemplate::default(), 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn gate_examples() {
        let held = |theta0: f64| SignalSpec {
            theta0,
            tau: 0.0,
            axis_offset: PI,
        };
        for step in [0, 1, 17, 1000] {
            assert_eq!(signal_gate(&held(0.1), step, Axis::NorthSouth), Gate::Go);
        }
        assert_eq!(signal_gate(&held(PI + 0.1), 0, Axis::NorthSouth), Gate::Stop);
        let spec = SignalSpec::new(0.0, PI / 4.0, PI).unwrap();
        assert_eq!(signal_gate(&spec, 3, Axis::NorthSouth), Gate::Go);
        // 3π/4 + π lies in (π, 2π)
        assert_eq!(signal_gate(&spec, 3, Axis::EastWest), Gate::Stop);
        // phase exactly 0 is stop on both boundaries
        assert_eq!(signal_gate(&spec, 0, Axis::NorthSouth), Gate::Stop);
    }

    #[test]
    fn signal_spec_validation() {
        assert!(SignalSpec::new(0.0, 0.0, PI).is_err());
        assert!(SignalSpec::new(TAU, 1.0, PI).is_err());
        assert!(SignalSpec::new(0.0, 1.0, -0.1).is_err());
        assert!(SignalSpec::new(0.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn period_catalogue_is_respected() {
        let template = SignalTemplate {
            period_choices: vec![9.0, 12.0],
            ..SignalTemplate::default()
        };
        let net = build_lattice(4, 4, &template, 3).unwrap();
        for s in &net.signals {
            let p = s.period();
            assert!((p - 9.0).abs() < 1e-12 || (p - 12.0).abs() < 1e-12, "{p}");
        }
        let bad = SignalTemplate {
            period_choices: vec![10.0, 0.0],
            ..SignalTemplate::default()
        };
        assert!(build_lattice(2, 2, &bad, 0).is_err());
    }

    #[test]
    fn all_stop_keeps_state() {
        let net = default_net(2, 2, 1);
        let stopped = vec![
            SignalSpec {
                theta0: 1.5 * PI,
                tau: 1e-300,
                axis_offset: 0.0
            };
            4
        ];
        let net = LatticeNetwork { signals: stopped, ..net };
        let init = TrafficState::uniform(&net, 3.0);
        let (next, released) = net.step(&init).unwrap();
        assert_eq!(next.counts, init.counts);
        assert!(released.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn step_rejects_wrong_dimension() {
        let net = default_net(2, 2, 1);
        let state = TrafficState {
            counts: vec![1.0; 3],
            step: 0,
        };
        assert!(matches!(net.step(&state), Err(Error::Dimension(_))));
    }

    #[test]
    fn hundred_steps_conserve_one_sixty_vehicles() {
        let net = default_net(2, 2, 1);
        let mut state = TrafficState::uniform(&net, 10.0);
        for _ in 0..100 {
            state = net.step(&state).unwrap().0;
            let total: f64 = state.counts.iter().sum();
            assert!((total - 160.0).abs() <= 160.0 * 1e-9, "total {total}");
            assert!(state.counts.iter().all(|&c| c >= 0.0));
        }
    }

    #[test]
    fn open_boundary_loses_vehicles_at_the_edge() {
        let net = LatticeConfig {
            torus: false,
            ..LatticeConfig::new(3, 3, 4)
        }
        .build()
        .unwrap();
        // corners have two sides, edges three, the centre four
        assert_eq!(net.n_links(), 4 * 2 + 4 * 3 + 4);
        net.validate().unwrap();
        let init = TrafficState::uniform(&net, 1.0);
        let sim = net.simulate(&init, 200, 1.0).unwrap();
        assert!(sim.trajectory.last().unwrap().total() < init.total());
    }

    #[test]
    fn simulate_lengths_and_errors() {
        let net = default_net(2, 2, 1);
        let init = TrafficState::uniform(&net, 1.0);
        assert!(net.simulate(&init, 0, 1.0).is_err());
        assert!(net.simulate(&init, 1, 0.0).is_err());
        let sim = net.simulate(&init, 1, 1.0).unwrap();
        assert_eq!(sim.trajectory.len(), 2);
        assert_eq!(sim.released.len(), 1);
    }

    #[test]
    fn all_stop_signals_give_empty_log() {
        let net = default_net(3, 3, 2);
        let signals = vec![
            SignalSpec {
                theta0: 1.5 * PI,
                tau: 1e-12,
                axis_offset: 0.0
            };
            9
        ];
        let net = LatticeNetwork { signals, ..net };
        let sim = net
            .simulate(&TrafficState::uniform(&net, 2.0), 50, 1.0)
            .unwrap();
        assert!(sim.log.records.is_empty());
    }

    #[test]
    fn log_is_sorted() {
        let net = default_net(4, 4, 3);
        let sim = net
            .simulate(&TrafficState::uniform(&net, 1.0), 40, 2.5)
            .unwrap();
        let keys: Vec<_> = sim
            .log
            .records
            .iter()
            .map(|r| (r.time_s, r.node_id.clone(), r.direction.letter()))
            .collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn network_json_round_trip() {
        let net = default_net(3, 3, 11);
        let text = net.to_json().unwrap();
        let back = LatticeNetwork::from_json(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn series_names_use_head_node_and_approach() {
        let net = default_net(4, 4, 0);
        // node 5 is row 1, column 0; its east neighbour is node 6
        let i = net.link_by_series("5e").unwrap();
        let l = net.links[i];
        assert_eq!((l.tail, l.head), (5, 4));
    }
}
