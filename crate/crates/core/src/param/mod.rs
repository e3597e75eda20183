//! Coefficient-space equality constraints for the closed-loop
//! parameterizations over FIR responses of horizon `T`, feasibility
//! diagnosis, and lifting of solutions between parameterizations.
//!
//! Products with the plant `G = C (zI − A)⁻¹ B` are encoded exactly: the
//! convolution state is carried as affine expressions of the unknowns, and
//! the response beyond the horizon is forced to vanish through
//! `C Aʲ S_{T+1} = 0` (left products) or `P_{T+1} Aʲ B = 0` (right products)
//! for `j < n`, which suffices by Cayley–Hamilton.

mod affine;
mod identity;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::closedloop::{Disturbance, Signal};
use crate::linalg::ConstraintFactor;
use crate::lti::{CMat, FirTransferMatrix, Mat, StateSpaceModel, C64, STABILITY_MARGIN};
use crate::{Error, Result};

pub(crate) use affine::{Affine, AffineFir, AffineMat};
pub use identity::{constraint_mismatch, max_constraint_mismatch};

/// Default relative least-squares residual separating feasible from infeasible.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-8;

/// Which closed-loop maps are the decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParameterizationKind {
    /// State-based: `(δx, δy) → (x, u)`.
    Slp,
    /// Input-output: `(δy, δu) → (y, u)`.
    Iop,
    /// `(δx, δy) → (y, u)`.
    MixedI,
    /// `(δy, δu) → (x, u)`.
    MixedII,
    /// Open-loop stable plants: `δy → (y, u)` only.
    SimplifiedStablePlant,
    /// `C = I`: `δx → (x, u)` only.
    SimplifiedStateFeedback,
}

impl ParameterizationKind {
    /// The four full parameterizations.
    pub const PRIMARY: [ParameterizationKind; 4] = [
        ParameterizationKind::Slp,
        ParameterizationKind::Iop,
        ParameterizationKind::MixedI,
        ParameterizationKind::MixedII,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParameterizationKind::Slp => "slp",
            ParameterizationKind::Iop => "iop",
            ParameterizationKind::MixedI => "mixed-i",
            ParameterizationKind::MixedII => "mixed-ii",
            ParameterizationKind::SimplifiedStablePlant => "stable-plant",
            ParameterizationKind::SimplifiedStateFeedback => "state-feedback",
        }
    }

    /// Decision blocks in declaration (stacking) order.
    pub fn block_names(self) -> &'static [BlockName] {
        use BlockName::*;
        match self {
            ParameterizationKind::Slp => &[Xx, Xy, Ux, Uy],
            ParameterizationKind::Iop => &[Yy, Yu, Uy, Uu],
            ParameterizationKind::MixedI => &[Yx, Yy, Ux, Uy],
            ParameterizationKind::MixedII => &[Xy, Xu, Uy, Uu],
            ParameterizationKind::SimplifiedStablePlant => &[Yy, Uy],
            ParameterizationKind::SimplifiedStateFeedback => &[Xx, Ux],
        }
    }
}

impl fmt::Display for ParameterizationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParameterizationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "slp" => Ok(Self::Slp),
            "iop" => Ok(Self::Iop),
            "mixed-i" | "mixedi" | "mixed1" | "mixed-1" => Ok(Self::MixedI),
            "mixed-ii" | "mixedii" | "mixed2" | "mixed-2" => Ok(Self::MixedII),
            "stable-plant" | "simplified-stable-plant" => Ok(Self::SimplifiedStablePlant),
            "state-feedback" | "simplified-state-feedback" => Ok(Self::SimplifiedStateFeedback),
            _ => Err(Error::Parse(format!("unknown parameterization kind '{s}'"))),
        }
    }
}

/// One of the nine closed-loop maps, named signal-first (`Uy` is `δy → u`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockName {
    Xx,
    Xy,
    Xu,
    Yx,
    Yy,
    Yu,
    Ux,
    Uy,
    Uu,
}

impl BlockName {
    pub const ALL: [BlockName; 9] = [
        BlockName::Xx,
        BlockName::Xy,
        BlockName::Xu,
        BlockName::Yx,
        BlockName::Yy,
        BlockName::Yu,
        BlockName::Ux,
        BlockName::Uy,
        BlockName::Uu,
    ];

    pub fn signal(self) -> Signal {
        use BlockName::*;
        match self {
            Xx | Xy | Xu => Signal::State,
            Yx | Yy | Yu => Signal::Output,
            Ux | Uy | Uu => Signal::Input,
        }
    }

    pub fn disturbance(self) -> Disturbance {
        use BlockName::*;
        match self {
            Xx | Yx | Ux => Disturbance::State,
            Xy | Yy | Uy => Disturbance::Output,
            Xu | Yu | Uu => Disturbance::Input,
        }
    }

    pub fn label(self) -> &'static str {
        use BlockName::*;
        match self {
            Xx => "Phi_xx",
            Xy => "Phi_xy",
            Xu => "Phi_xu",
            Yx => "Phi_yx",
            Yy => "Phi_yy",
            Yu => "Phi_yu",
            Ux => "Phi_ux",
            Uy => "Phi_uy",
            Uu => "Phi_uu",
        }
    }

    /// All maps except `δy → y`, `δy → u`, `δu → u` vanish at `z = ∞`.
    pub fn strictly_proper(self) -> bool {
        !matches!(self, BlockName::Yy | BlockName::Uy | BlockName::Uu)
    }

    /// Identity feedthrough carried by `δy → y` and `δu → u`.
    pub fn feedthrough(self, plant: &StateSpaceModel) -> Option<Mat> {
        match self {
            BlockName::Yy => Some(Mat::identity(plant.outputs(), plant.outputs())),
            BlockName::Uu => Some(Mat::identity(plant.inputs(), plant.inputs())),
            _ => None,
        }
    }

    /// `(rows, cols)` for a plant with `n` states, `m` inputs, `p` outputs.
    pub fn shape(self, plant: &StateSpaceModel) -> (usize, usize) {
        let dim_s = |s: Signal| match s {
            Signal::State => plant.states(),
            Signal::Output => plant.outputs(),
            Signal::Input => plant.inputs(),
        };
        let dim_d = |d: Disturbance| match d {
            Disturbance::State => plant.states(),
            Disturbance::Output => plant.outputs(),
            Disturbance::Input => plant.inputs(),
        };
        (dim_s(self.signal()), dim_d(self.disturbance()))
    }
}

impl fmt::Display for BlockName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BlockName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BlockName::ALL
            .iter()
            .copied()
            .find(|b| b.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown block '{s}'")))
    }
}

/// Named FIR blocks in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockSet {
    entries: Vec<(BlockName, FirTransferMatrix)>,
}

impl BlockSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: BlockName, block: FirTransferMatrix) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = block,
            None => self.entries.push((name, block)),
        }
    }

    pub fn with(mut self, name: BlockName, block: FirTransferMatrix) -> Self {
        self.insert(name, block);
        self
    }

    pub fn get(&self, name: BlockName) -> Option<&FirTransferMatrix> {
        self.entries.iter().find(|(n, _)| *n == name).map(|(_, b)| b)
    }

    pub fn require(&self, name: BlockName) -> Result<&FirTransferMatrix> {
        self.get(name)
            .ok_or_else(|| Error::MissingBlock(name.label().to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &(BlockName, FirTransferMatrix)> {
        self.entries.iter()
    }

    pub fn names(&self) -> Vec<BlockName> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    /// Largest horizon over the blocks.
    pub fn horizon(&self) -> usize {
        self.entries.iter().map(|(_, b)| b.horizon()).max().unwrap_or(0)
    }
}

/// Frequency responses of named blocks.
pub trait BlockResponses {
    fn response(&self, name: BlockName, z: C64) -> Option<CMat>;
}

impl BlockResponses for BlockSet {
    fn response(&self, name: BlockName, z: C64) -> Option<CMat> {
        self.get(name).map(|b| b.eval(z))
    }
}

/// Named blocks given as state-space models.
#[derive(Debug, Clone, Default)]
pub struct ModelBlocks {
    entries: Vec<(BlockName, StateSpaceModel)>,
}

impl ModelBlocks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: BlockName, model: StateSpaceModel) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = model,
            None => self.entries.push((name, model)),
        }
    }

    pub fn get(&self, name: BlockName) -> Option<&StateSpaceModel> {
        self.entries.iter().find(|(n, _)| *n == name).map(|(_, b)| b)
    }

    pub fn require(&self, name: BlockName) -> Result<&StateSpaceModel> {
        self.get(name)
            .ok_or_else(|| Error::MissingBlock(name.label().to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &(BlockName, StateSpaceModel)> {
        self.entries.iter()
    }
}

impl BlockResponses for ModelBlocks {
    fn response(&self, name: BlockName, z: C64) -> Option<CMat> {
        self.get(name).and_then(|b| b.eval(z))
    }
}

/// Position of one block's coefficients in the stacked unknown vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableBlock {
    pub name: BlockName,
    pub rows: usize,
    pub cols: usize,
    pub horizon: usize,
    pub strictly_proper: bool,
    /// Lag-0 coefficient fixed by the plant being strictly proper
    /// (`Φyy,0 = I`, `Φuu,0 = I`); not a decision variable.
    pub feedthrough: Option<Mat>,
    pub offset: usize,
}

impl VariableBlock {
    pub fn first_lag(&self) -> usize {
        usize::from(self.strictly_proper || self.feedthrough.is_some())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols * (self.horizon + 1 - self.first_lag())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of coefficient `lag`, entry `(i, j)`; column-major within a lag.
    pub fn index(&self, lag: usize, i: usize, j: usize) -> usize {
        debug_assert!(lag >= self.first_lag() && lag <= self.horizon);
        self.offset + (lag - self.first_lag()) * self.rows * self.cols + j * self.rows + i
    }
}

/// Constraint family a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintGroup {
    Row,
    Column,
    Tail,
}

impl fmt::Display for ConstraintGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintGroup::Row => "row",
            ConstraintGroup::Column => "column",
            ConstraintGroup::Tail => "tail",
        })
    }
}

/// Provenance of one equality row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowLabel {
    pub group: ConstraintGroup,
    pub equation: &'static str,
    /// Lag for row/column rows; power of `A` for tail rows.
    pub index: usize,
    pub entry: (usize, usize),
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = if self.group == ConstraintGroup::Tail { "power" } else { "lag" };
        write!(
            f,
            "{}[{}] {} {} ({},{})",
            self.group, self.equation, what, self.index, self.entry.0, self.entry.1
        )
    }
}

/// Which weight a cost block is measured with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostWeight {
    Output,
    Input,
}

/// One weighted block of the quadratic cost, affine in the unknowns.
#[derive(Debug, Clone)]
pub struct CostTerm {
    pub weight: CostWeight,
    pub description: &'static str,
    pub(crate) expr: AffineFir,
}

impl CostTerm {
    pub fn rows(&self) -> usize {
        self.expr.rows
    }

    /// The block's FIR coefficients at a given unknown vector.
    pub fn value(&self, x: &DVector<f64>) -> FirTransferMatrix {
        FirTransferMatrix::new(self.expr.lags.iter().map(|l| l.eval(x.as_slice())).collect())
            .expect("cost block coefficients share a shape")
    }
}

/// Equality-constrained coefficient program `E x = f` plus cost blocks.
#[derive(Debug, Clone)]
pub struct CoefficientProgram {
    pub kind: ParameterizationKind,
    pub horizon: usize,
    pub plant: StateSpaceModel,
    pub layout: Vec<VariableBlock>,
    pub e: Mat,
    pub f: DVector<f64>,
    pub labels: Vec<RowLabel>,
    pub cost_terms: Vec<CostTerm>,
}

impl CoefficientProgram {
    pub fn num_vars(&self) -> usize {
        self.layout.iter().map(VariableBlock::len).sum()
    }

    pub fn num_rows(&self) -> usize {
        self.e.nrows()
    }

    /// `E x − f`.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.e * x - &self.f
    }

    /// De-vectorizes a solution into named FIR blocks.
    pub fn extract_blocks(&self, x: &DVector<f64>) -> Result<BlockSet> {
        if x.len() != self.num_vars() {
            return Err(Error::DimensionMismatch(format!(
                "solution has {} entries, layout needs {}",
                x.len(),
                self.num_vars()
            )));
        }
        let mut set = BlockSet::new();
        for v in &self.layout {
            let coeffs = (0..=v.horizon)
                .map(|lag| {
                    if lag < v.first_lag() {
                        v.feedthrough.clone().unwrap_or_else(|| Mat::zeros(v.rows, v.cols))
                    } else {
                        Mat::from_fn(v.rows, v.cols, |i, j| x[v.index(lag, i, j)])
                    }
                })
                .collect();
            set.insert(v.name, FirTransferMatrix::new(coeffs)?);
        }
        Ok(set)
    }

    /// Stacks named blocks into the unknown vector (inverse of [`Self::extract_blocks`]).
    pub fn vectorize(&self, blocks: &BlockSet) -> Result<DVector<f64>> {
        let mut x = DVector::zeros(self.num_vars());
        for v in &self.layout {
            let b = blocks.require(v.name)?;
            if (b.rows(), b.cols()) != (v.rows, v.cols) {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{}, layout needs {}x{}",
                    v.name,
                    b.rows(),
                    b.cols(),
                    v.rows,
                    v.cols
                )));
            }
            if b.horizon() > v.horizon
                && b.coeffs()[v.horizon + 1..].iter().any(|c| c.iter().any(|e| *e != 0.0))
            {
                return Err(Error::DimensionMismatch(format!(
                    "{} has nonzero coefficients beyond horizon {}",
                    v.name, v.horizon
                )));
            }
            let fixed = v.feedthrough.clone().unwrap_or_else(|| Mat::zeros(v.rows, v.cols));
            if v.first_lag() == 1 && (b.coeff(0) - &fixed).amax() != 0.0 {
                return Err(Error::DimensionMismatch(format!(
                    "{} lag-0 coefficient differs from its fixed value",
                    v.name
                )));
            }
            for lag in v.first_lag()..=v.horizon {
                let c = b.coeff(lag);
                for j in 0..v.cols {
                    for i in 0..v.rows {
                        x[v.index(lag, i, j)] = c[(i, j)];
                    }
                }
            }
        }
        Ok(x)
    }

    /// Plain-text dump: `%` header lines with the layout, then one line per
    /// row: `label | f | e_1 … e_nv`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "%%CoefficientProgram kind={} horizon={}\n",
            self.kind, self.horizon
        ));
        for v in &self.layout {
            s.push_str(&format!(
                "% variable {} rows={} cols={} horizon={} first_lag={} offset={} len={}\n",
                v.name,
                v.rows,
                v.cols,
                v.horizon,
                v.first_lag(),
                v.offset,
                v.len()
            ));
        }
        s.push_str(&format!("{} {}\n", self.num_rows(), self.num_vars()));
        for (r, label) in self.labels.iter().enumerate() {
            s.push_str(&format!("{label} | {:.16e} |", self.f[r]));
            for c in 0..self.e.ncols() {
                s.push_str(&format!(" {:.16e}", self.e[(r, c)]));
            }
            s.push('\n');
        }
        s
    }
}

struct Builder<'a> {
    plant: &'a StateSpaceModel,
    horizon: usize,
    layout: Vec<VariableBlock>,
    nv: usize,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    labels: Vec<RowLabel>,
}

impl<'a> Builder<'a> {
    fn declare(&mut self, name: BlockName) -> AffineFir {
        let (rows, cols) = name.shape(self.plant);
        let block = VariableBlock {
            name,
            rows,
            cols,
            horizon: self.horizon,
            strictly_proper: name.strictly_proper(),
            feedthrough: name.feedthrough(self.plant),
            offset: self.nv,
        };
        let mut fir = AffineFir::zeros(rows, cols, self.horizon);
        if let Some(d0) = &block.feedthrough {
            fir.lags[0] = AffineMat::from_const(d0);
        }
        for lag in block.first_lag()..=self.horizon {
            for j in 0..cols {
                for i in 0..rows {
                    *fir.lags[lag].get_mut(i, j) = Affine::var(block.index(lag, i, j));
                }
            }
        }
        self.nv += block.len();
        self.layout.push(block);
        fir
    }

    fn push_row(&mut self, expr: &Affine, target: f64, label: RowLabel) {
        let rhs = target - expr.constant;
        if expr.terms.is_empty() && rhs == 0.0 {
            return;
        }
        self.rows.push((expr.terms.clone(), rhs));
        self.labels.push(label);
    }

    /// `lhs = rhs0` at lag 0 and `lhs = 0` at every later lag.
    fn equate(&mut self, group: ConstraintGroup, equation: &'static str, lhs: &AffineFir, rhs0: Option<&Mat>) {
        for (lag, coeff) in lhs.lags.iter().enumerate() {
            for i in 0..lhs.rows {
                for j in 0..lhs.cols {
                    let target = match (lag, rhs0) {
                        (0, Some(m)) => m[(i, j)],
                        _ => 0.0,
                    };
                    self.push_row(
                        coeff.get(i, j),
                        target,
                        RowLabel {
                            group,
                            equation,
                            index: lag,
                            entry: (i, j),
                        },
                    );
                }
            }
        }
    }

    fn vanish(&mut self, equation: &'static str, tails: &[AffineMat]) {
        for (power, t) in tails.iter().enumerate() {
            for i in 0..t.rows {
                for j in 0..t.cols {
                    self.push_row(
                        t.get(i, j),
                        0.0,
                        RowLabel {
                            group: ConstraintGroup::Tail,
                            equation,
                            index: power,
                            entry: (i, j),
                        },
                    );
                }
            }
        }
    }

    /// `G X` (plus `C (zI − A)⁻¹ J` when injecting) up to the horizon, with
    /// the tail expressions `C Aʲ S_{T+1}`.
    fn left_plant(&self, x: &AffineFir, inject: Option<&Mat>) -> (AffineFir, Vec<AffineMat>) {
        let (a, b, c) = (self.plant.a(), self.plant.b(), self.plant.c());
        let n = self.plant.states();
        let mut s = AffineMat::zeros(n, x.cols);
        let mut head = AffineFir::zeros(c.nrows(), x.cols, x.horizon());
        for k in 0..=x.horizon() {
            head.lags[k] = s.premul(c);
            let mut next = s.premul(a);
            next.add_scaled(&x.lags[k].premul(b), 1.0);
            if k == 0 {
                if let Some(j) = inject {
                    next.add_const(j);
                }
            }
            s = next;
        }
        let mut tails = Vec::with_capacity(n);
        for _ in 0..n {
            tails.push(s.premul(c));
            s = s.premul(a);
        }
        (head, tails)
    }

    /// `X G` (plus `J (zI − A)⁻¹ B` when injecting) up to the horizon, with
    /// the tail expressions `P_{T+1} Aʲ B`.
    fn right_plant(&self, x: &AffineFir, inject: Option<&Mat>) -> (AffineFir, Vec<AffineMat>) {
        let (a, b, c) = (self.plant.a(), self.plant.b(), self.plant.c());
        let n = self.plant.states();
        let mut p = AffineMat::zeros(x.rows, n);
        let mut head = AffineFir::zeros(x.rows, b.ncols(), x.horizon());
        for k in 0..=x.horizon() {
            head.lags[k] = p.postmul(b);
            let mut next = p.postmul(a);
            next.add_scaled(&x.lags[k].postmul(c), 1.0);
            if k == 0 {
                if let Some(j) = inject {
                    next.add_const(j);
                }
            }
            p = next;
        }
        let mut tails = Vec::with_capacity(n);
        for _ in 0..n {
            tails.push(p.postmul(b));
            p = p.postmul(a);
        }
        (head, tails)
    }

    /// `(zI − A) X − B Y` for strictly proper `X`.
    fn left_polynomial(&self, x: &AffineFir, y: &AffineFir) -> AffineFir {
        x.shift_forward()
            .add_scaled(&x.premul(self.plant.a()), -1.0)
            .add_scaled(&y.premul(self.plant.b()), -1.0)
    }

    /// `X (zI − A) − Y C` for strictly proper `X`.
    fn right_polynomial(&self, x: &AffineFir, y: &AffineFir) -> AffineFir {
        x.shift_forward()
            .add_scaled(&x.postmul(self.plant.a()), -1.0)
            .add_scaled(&y.postmul(self.plant.c()), -1.0)
    }

    fn finish(self, kind: ParameterizationKind, cost_terms: Vec<CostTerm>) -> CoefficientProgram {
        let mut e = Mat::zeros(self.rows.len(), self.nv);
        let mut f = DVector::zeros(self.rows.len());
        for (r, (terms, rhs)) in self.rows.iter().enumerate() {
            for (i, c) in terms {
                e[(r, *i)] = *c;
            }
            f[r] = *rhs;
        }
        CoefficientProgram {
            kind,
            horizon: self.horizon,
            plant: self.plant.clone(),
            layout: self.layout,
            e,
            f,
            labels: self.labels,
            cost_terms,
        }
    }
}

fn cost(weight: CostWeight, description: &'static str, expr: AffineFir) -> CostTerm {
    CostTerm {
        weight,
        description,
        expr,
    }
}

/// Builds the exact coefficient constraints of a parameterization at horizon `T`.
pub fn build_constraints(
    kind: ParameterizationKind,
    plant: &StateSpaceModel,
    horizon: usize,
) -> Result<CoefficientProgram> {
    if horizon == 0 {
        return Err(Error::HorizonTooShort { got: 0, min: 1 });
    }
    if !plant.is_strictly_proper() {
        return Err(Error::PlantNotStrictlyProper);
    }
    let (n, m, p) = (plant.states(), plant.inputs(), plant.outputs());
    match kind {
        ParameterizationKind::SimplifiedStablePlant => {
            let radius = plant.spectral_radius()?;
            if radius >= 1.0 - STABILITY_MARGIN {
                return Err(Error::PlantUnstable {
                    spectral_radius: radius,
                });
            }
        }
        ParameterizationKind::SimplifiedStateFeedback if plant.c() != &Mat::identity(n, n) => {
            return Err(Error::NotStateFeedback);
        }
        _ => {}
    }
    let (b, c) = (plant.b().clone(), plant.c().clone());
    let (ip, im, inn) = (
        Mat::identity(p, p),
        Mat::identity(m, m),
        Mat::identity(n, n),
    );
    let mut bld = Builder {
        plant,
        horizon,
        layout: Vec::new(),
        nv: 0,
        rows: Vec::new(),
        labels: Vec::new(),
    };
    use ConstraintGroup::{Column, Row};
    let cost_terms = match kind {
        ParameterizationKind::Slp => {
            let xx = bld.declare(BlockName::Xx);
            let xy = bld.declare(BlockName::Xy);
            let ux = bld.declare(BlockName::Ux);
            let uy = bld.declare(BlockName::Uy);
            let r1 = bld.left_polynomial(&xx, &ux);
            bld.equate(Row, "(zI-A)Phi_xx - B Phi_ux = I", &r1, Some(&inn));
            let r2 = bld.left_polynomial(&xy, &uy);
            bld.equate(Row, "(zI-A)Phi_xy - B Phi_uy = 0", &r2, None);
            let c1 = bld.right_polynomial(&xx, &xy);
            bld.equate(Column, "Phi_xx(zI-A) - Phi_xy C = I", &c1, Some(&inn));
            let c2 = bld.right_polynomial(&ux, &uy);
            bld.equate(Column, "Phi_ux(zI-A) - Phi_uy C = 0", &c2, None);
            vec![
                cost(CostWeight::Output, "C Phi_xy + I", xy.premul(&c).add_const(&ip)),
                cost(CostWeight::Output, "C Phi_xx B", xx.premul(&c).postmul(&b)),
                cost(CostWeight::Input, "Phi_uy", uy),
                cost(CostWeight::Input, "Phi_ux B + I", ux.postmul(&b).add_const(&im)),
            ]
        }
        ParameterizationKind::Iop => {
            let yy = bld.declare(BlockName::Yy);
            let yu = bld.declare(BlockName::Yu);
            let uy = bld.declare(BlockName::Uy);
            let uu = bld.declare(BlockName::Uu);
            let (g_uy, t1) = bld.left_plant(&uy, None);
            bld.equate(Row, "Phi_yy - G Phi_uy = I", &yy.add_scaled(&g_uy, -1.0), Some(&ip));
            bld.vanish("Phi_yy - G Phi_uy = I", &t1);
            let (g_uu, t2) = bld.left_plant(&uu, None);
            bld.equate(Row, "Phi_yu - G Phi_uu = 0", &yu.add_scaled(&g_uu, -1.0), None);
            bld.vanish("Phi_yu - G Phi_uu = 0", &t2);
            let (yy_g, t3) = bld.right_plant(&yy, None);
            bld.equate(Column, "-Phi_yy G + Phi_yu = 0", &yu.add_scaled(&yy_g, -1.0), None);
            bld.vanish("-Phi_yy G + Phi_yu = 0", &t3);
            let (uy_g, t4) = bld.right_plant(&uy, None);
            bld.equate(Column, "-Phi_uy G + Phi_uu = I", &uu.add_scaled(&uy_g, -1.0), Some(&im));
            bld.vanish("-Phi_uy G + Phi_uu = I", &t4);
            vec![
                cost(CostWeight::Output, "Phi_yy", yy),
                cost(CostWeight::Output, "Phi_yu", yu),
                cost(CostWeight::Input, "Phi_uy", uy),
                cost(CostWeight::Input, "Phi_uu", uu),
            ]
        }
        ParameterizationKind::MixedI => {
            let yx = bld.declare(BlockName::Yx);
            let yy = bld.declare(BlockName::Yy);
            let ux = bld.declare(BlockName::Ux);
            let uy = bld.declare(BlockName::Uy);
            let (g_ux, t1) = bld.left_plant(&ux, Some(&inn));
            bld.equate(Row, "Phi_yx - G Phi_ux = C(zI-A)^-1", &yx.add_scaled(&g_ux, -1.0), None);
            bld.vanish("Phi_yx - G Phi_ux = C(zI-A)^-1", &t1);
            let (g_uy, t2) = bld.left_plant(&uy, None);
            bld.equate(Row, "Phi_yy - G Phi_uy = I", &yy.add_scaled(&g_uy, -1.0), Some(&ip));
            bld.vanish("Phi_yy - G Phi_uy = I", &t2);
            let c1 = bld.right_polynomial(&yx, &yy);
            bld.equate(Column, "Phi_yx(zI-A) - Phi_yy C = 0", &c1, None);
            let c2 = bld.right_polynomial(&ux, &uy);
            bld.equate(Column, "Phi_ux(zI-A) - Phi_uy C = 0", &c2, None);
            vec![
                cost(CostWeight::Output, "Phi_yy", yy),
                cost(CostWeight::Output, "Phi_yx B", yx.postmul(&b)),
                cost(CostWeight::Input, "Phi_uy", uy),
                cost(CostWeight::Input, "Phi_ux B + I", ux.postmul(&b).add_const(&im)),
            ]
        }
        ParameterizationKind::MixedII => {
            let xy = bld.declare(BlockName::Xy);
            let xu = bld.declare(BlockName::Xu);
            let uy = bld.declare(BlockName::Uy);
            let uu = bld.declare(BlockName::Uu);
            let r1 = bld.left_polynomial(&xy, &uy);
            bld.equate(Row, "(zI-A)Phi_xy - B Phi_uy = 0", &r1, None);
            let r2 = bld.left_polynomial(&xu, &uu);
            bld.equate(Row, "(zI-A)Phi_xu - B Phi_uu = 0", &r2, None);
            let (xy_g, t3) = bld.right_plant(&xy, Some(&inn));
            bld.equate(Column, "-Phi_xy G + Phi_xu = (zI-A)^-1 B", &xu.add_scaled(&xy_g, -1.0), None);
            bld.vanish("-Phi_xy G + Phi_xu = (zI-A)^-1 B", &t3);
            let (uy_g, t4) = bld.right_plant(&uy, None);
            bld.equate(Column, "-Phi_uy G + Phi_uu = I", &uu.add_scaled(&uy_g, -1.0), Some(&im));
            bld.vanish("-Phi_uy G + Phi_uu = I", &t4);
            vec![
                cost(CostWeight::Output, "C Phi_xy + I", xy.premul(&c).add_const(&ip)),
                cost(CostWeight::Output, "C Phi_xu", xu.premul(&c)),
                cost(CostWeight::Input, "Phi_uy", uy),
                cost(CostWeight::Input, "Phi_uu", uu),
            ]
        }
        ParameterizationKind::SimplifiedStablePlant => {
            let yy = bld.declare(BlockName::Yy);
            let uy = bld.declare(BlockName::Uy);
            let (g_uy, t1) = bld.left_plant(&uy, None);
            bld.equate(Row, "Phi_yy - G Phi_uy = I", &yy.add_scaled(&g_uy, -1.0), Some(&ip));
            bld.vanish("Phi_yy - G Phi_uy = I", &t1);
            vec![
                cost(CostWeight::Output, "Phi_yy", yy),
                cost(CostWeight::Input, "Phi_uy", uy),
            ]
        }
        ParameterizationKind::SimplifiedStateFeedback => {
            let xx = bld.declare(BlockName::Xx);
            let ux = bld.declare(BlockName::Ux);
            let r1 = bld.left_polynomial(&xx, &ux);
            bld.equate(Row, "(zI-A)Phi_xx - B Phi_ux = I", &r1, Some(&inn));
            vec![
                cost(CostWeight::Output, "Phi_xx", xx),
                cost(CostWeight::Input, "Phi_ux", ux),
            ]
        }
    };
    Ok(bld.finish(kind, cost_terms))
}

/// Outcome of a least-squares feasibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityDiagnosis {
    pub feasible: bool,
    /// `min_x ‖E x − f‖`.
    pub min_residual: f64,
    /// `min_residual / max(1, ‖f‖)`.
    pub relative_residual: f64,
    /// Labels of rows left unsatisfied by the least-squares solution, worst first.
    pub blocking_constraints: Vec<String>,
}

/// Feasibility at [`DEFAULT_FEASIBILITY_TOL`].
pub fn check_feasibility(program: &CoefficientProgram) -> FeasibilityDiagnosis {
    check_feasibility_with(program, DEFAULT_FEASIBILITY_TOL)
}

pub fn check_feasibility_with(program: &CoefficientProgram, tol: f64) -> FeasibilityDiagnosis {
    let factor = ConstraintFactor::new(&program.e);
    let scale = program.f.norm().max(1.0);
    let x = factor.particular(&program.f);
    let quick = program.residual(&x).norm();
    if quick / scale < tol {
        return FeasibilityDiagnosis {
            feasible: true,
            min_residual: quick,
            relative_residual: quick / scale,
            blocking_constraints: Vec::new(),
        };
    }
    let (min_residual, resid) = factor.least_squares_residual(&program.f);
    let relative_residual = min_residual / scale;
    let mut offending: Vec<(usize, f64)> = resid
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() > tol * scale)
        .map(|(i, r)| (i, r.abs()))
        .collect();
    offending.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    FeasibilityDiagnosis {
        feasible: relative_residual < tol,
        min_residual,
        relative_residual,
        blocking_constraints: offending
            .iter()
            .map(|(i, _)| program.labels[*i].to_string())
            .collect(),
    }
}

fn unsupported(from: ParameterizationKind, to: ParameterizationKind) -> Error {
    Error::UnsupportedDirection {
        from: from.to_string(),
        to: to.to_string(),
    }
}

/// Maps a solution of one parameterization to another along the inclusion
/// chain (state-based ⊆ mixed ⊆ input-output), using the algebraic relations
/// between the nine maps.
pub fn lift_solution(
    from: ParameterizationKind,
    to: ParameterizationKind,
    blocks: &BlockSet,
    plant: &StateSpaceModel,
) -> Result<BlockSet> {
    use BlockName::*;
    use ParameterizationKind::*;
    if from == to {
        return Ok(blocks.clone());
    }
    let (b, c) = (plant.b(), plant.c());
    let ip = Mat::identity(plant.outputs(), plant.outputs());
    let im = Mat::identity(plant.inputs(), plant.inputs());
    let get = |n: BlockName| blocks.require(n).cloned();
    match (from, to) {
        (Slp, Iop) => Ok(BlockSet::new()
            .with(Yy, get(Xy)?.premul(c)?.add_constant(&ip)?)
            .with(Yu, get(Xx)?.premul(c)?.postmul(b)?)
            .with(Uy, get(Uy)?)
            .with(Uu, get(Ux)?.postmul(b)?.add_constant(&im)?)),
        (Slp, MixedI) => Ok(BlockSet::new()
            .with(Yx, get(Xx)?.premul(c)?)
            .with(Yy, get(Xy)?.premul(c)?.add_constant(&ip)?)
            .with(Ux, get(Ux)?)
            .with(Uy, get(Uy)?)),
        (Slp, MixedII) => Ok(BlockSet::new()
            .with(Xy, get(Xy)?)
            .with(Xu, get(Xx)?.postmul(b)?)
            .with(Uy, get(Uy)?)
            .with(Uu, get(Ux)?.postmul(b)?.add_constant(&im)?)),
        (Slp, SimplifiedStateFeedback) => Ok(BlockSet::new().with(Xx, get(Xx)?).with(Ux, get(Ux)?)),
        (MixedI, Iop) => Ok(BlockSet::new()
            .with(Yy, get(Yy)?)
            .with(Yu, get(Yx)?.postmul(b)?)
            .with(Uy, get(Uy)?)
            .with(Uu, get(Ux)?.postmul(b)?.add_constant(&im)?)),
        (MixedII, Iop) => Ok(BlockSet::new()
            .with(Yy, get(Xy)?.premul(c)?.add_constant(&ip)?)
            .with(Yu, get(Xu)?.premul(c)?)
            .with(Uy, get(Uy)?)
            .with(Uu, get(Uu)?)),
        (Iop | MixedI, SimplifiedStablePlant) => {
            Ok(BlockSet::new().with(Yy, get(Yy)?).with(Uy, get(Uy)?))
        }
        (Slp | MixedII, SimplifiedStablePlant) => {
            let iop = lift_solution(from, Iop, blocks, plant)?;
            lift_solution(Iop, to, &iop, plant)
        }
        _ => Err(unsupported(from, to)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn uncontrollable_plant() -> StateSpaceModel {
        StateSpaceModel::strictly_proper(
            dmatrix![0.5, 0.0; 0.0, 1.0],
            dmatrix![0.0; 1.0],
            dmatrix![0.0, 1.0],
        )
        .unwrap()
    }

    fn integrator() -> StateSpaceModel {
        StateSpaceModel::strictly_proper(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0]).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            ParameterizationKind::Slp,
            ParameterizationKind::Iop,
            ParameterizationKind::MixedI,
            ParameterizationKind::MixedII,
            ParameterizationKind::SimplifiedStablePlant,
            ParameterizationKind::SimplifiedStateFeedback,
        ] {
            assert_eq!(k.name().parse::<ParameterizationKind>().unwrap(), k);
        }
        assert!("nope".parse::<ParameterizationKind>().is_err());
    }

    #[test]
    fn zero_horizon_rejected() {
        assert!(matches!(
            build_constraints(ParameterizationKind::Iop, &integrator(), 0),
            Err(Error::HorizonTooShort { got: 0, .. })
        ));
    }

    #[test]
    fn slp_horizon_one_endpoints() {
        // T = 1 forces R_1 = I and A R_1 + B M_1 = 0, i.e. M_1 = 0 for A = 0.
        let prog = build_constraints(ParameterizationKind::Slp, &integrator(), 1).unwrap();
        let d = check_feasibility(&prog);
        assert!(d.feasible, "{d:?}");
        let fac = ConstraintFactor::new(&prog.e);
        let x = fac.particular(&prog.f);
        let blocks = prog.extract_blocks(&x).unwrap();
        assert!((blocks.get(BlockName::Xx).unwrap().coeff(1)[(0, 0)] - 1.0).abs() < 1e-12);
        // A = 2 cannot be cancelled in one step with B = 0.
        let stuck = StateSpaceModel::strictly_proper(dmatrix![2.0], dmatrix![0.0], dmatrix![1.0]).unwrap();
        let prog = build_constraints(ParameterizationKind::Slp, &stuck, 1).unwrap();
        assert!(!check_feasibility(&prog).feasible);
    }

    #[test]
    fn hidden_stable_mode_blocks_only_state_based_fir() {
        // The 0.5 mode is both uncontrollable and unobservable, so it shows up
        // in δx → x only. Maps that involve x or δx on one side stay FIR.
        let g = uncontrollable_plant();
        for t in [1, 5, 10] {
            let slp = check_feasibility(&build_constraints(ParameterizationKind::Slp, &g, t).unwrap());
            assert!(!slp.feasible && slp.min_residual > 1e-4, "SLP at T={t}: {slp:?}");
            assert!(!slp.blocking_constraints.is_empty());
            for kind in [
                ParameterizationKind::Iop,
                ParameterizationKind::MixedI,
                ParameterizationKind::MixedII,
            ] {
                let d = check_feasibility(&build_constraints(kind, &g, t).unwrap());
                assert!(d.feasible, "{kind} at T={t}: {d:?}");
            }
        }
    }

    #[test]
    fn uncontrollable_observable_mode_blocks_mixed_i() {
        // Mode 0.5 observable through y but not controllable: δx → y carries it.
        let g = StateSpaceModel::strictly_proper(
            dmatrix![0.5, 0.0; 0.0, 1.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 1.0],
        )
        .unwrap();
        let d = check_feasibility(&build_constraints(ParameterizationKind::MixedI, &g, 8).unwrap());
        assert!(!d.feasible && d.min_residual > 1e-4, "{d:?}");
        let d = check_feasibility(&build_constraints(ParameterizationKind::Iop, &g, 8).unwrap());
        assert!(d.feasible, "{d:?}");
    }

    #[test]
    fn zero_vector_gives_fixed_feedthroughs_only() {
        let prog = build_constraints(ParameterizationKind::Iop, &integrator(), 3).unwrap();
        let blocks = prog.extract_blocks(&DVector::zeros(prog.num_vars())).unwrap();
        for (name, b) in blocks.iter() {
            let expected = if matches!(name, BlockName::Yy | BlockName::Uu) { 1.0 } else { 0.0 };
            assert_eq!(b.coeff(0)[(0, 0)], expected);
            assert!(b.coeffs()[1..].iter().all(|c| c[(0, 0)] == 0.0));
        }
        assert!(prog.extract_blocks(&DVector::zeros(1)).is_err());
    }

    #[test]
    fn layout_is_contiguous() {
        let prog = build_constraints(ParameterizationKind::Slp, &uncontrollable_plant(), 4).unwrap();
        let mut next = 0;
        for v in &prog.layout {
            assert_eq!(v.offset, next);
            next += v.len();
        }
        assert_eq!(next, prog.e.ncols());
        assert_eq!(prog.labels.len(), prog.e.nrows());
    }

    #[test]
    fn text_dump_has_header_and_rows() {
        let prog = build_constraints(ParameterizationKind::Iop, &integrator(), 2).unwrap();
        let txt = prog.to_text();
        assert!(txt.starts_with("%%CoefficientProgram kind=iop horizon=2"));
        assert_eq!(txt.lines().filter(|l| !l.starts_with('%')).count(), prog.num_rows() + 1);
    }

    #[test]
    fn unsupported_lift_direction() {
        let r = lift_solution(
            ParameterizationKind::Iop,
            ParameterizationKind::Slp,
            &BlockSet::new(),
            &integrator(),
        );
        assert!(matches!(r, Err(Error::UnsupportedDirection { .. })));
    }

    proptest! {
        #[test]
        fn vectorize_inverts_extract(seed in 0u64..1000, t in 1usize..5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let prog = build_constraints(ParameterizationKind::MixedII, &uncontrollable_plant(), t).unwrap();
            let x = DVector::from_fn(prog.num_vars(), |_, _| rng.gen_range(-1.0..1.0));
            let blocks = prog.extract_blocks(&x).unwrap();
            prop_assert_eq!(prog.vectorize(&blocks).unwrap(), x);
        }
    }
}
