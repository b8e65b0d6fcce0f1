//! Contextual gridworld task families.
//!
//! Four environments share one grid dynamics: grid navigation (GN),
//! multiple points of interest (MP), pick-up and drop-off (PD) and ordered
//! navigation (ON). A context fixes entity locations (EL), the wall layout
//! (CM) or the visiting order (PO).

use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("unsupported pairing {0:?} with {1:?}")]
    UnsupportedPairing(EnvKind, ContextSpace),
    #[error("requested {requested} distinct contexts but only {available} exist")]
    InsufficientContexts { requested: usize, available: f64 },
    #[error("stepping a finished episode")]
    EpisodeFinished,
    #[error("invalid map: {0}")]
    InvalidMap(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Rectangular grid with optional walls on the edges between adjacent cells.
///
/// Interior edges are indexed first by the `height * (width - 1)` edges
/// joining horizontal neighbours (row-major), then by the
/// `(height - 1) * width` edges joining vertical neighbours.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridMap {
    width: usize,
    height: usize,
    walls: Vec<bool>,
}

impl GridMap {
    pub fn open(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "grid must be non-empty");
        let edges = height * (width - 1) + (height - 1) * width;
        Self {
            width,
            height,
            walls: vec![false; edges],
        }
    }

    pub fn with_walls(width: usize, height: usize, walls: Vec<bool>) -> Result<Self, GridError> {
        let mut map = Self::open(width, height);
        if walls.len() != map.walls.len() {
            return Err(GridError::InvalidMap(format!(
                "expected {} wall bits, got {}",
                map.walls.len(),
                walls.len()
            )));
        }
        map.walls = walls;
        if !map.is_connected() {
            return Err(GridError::InvalidMap("walls disconnect the grid".into()));
        }
        Ok(map)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn num_edges(&self) -> usize {
        self.walls.len()
    }

    pub fn walls(&self) -> &[bool] {
        &self.walls
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn cell_index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.num_cells()).map(|i| self.cell_at(i))
    }

    /// Interior edge index between two orthogonally adjacent cells.
    pub fn edge_between(&self, a: Cell, b: Cell) -> Option<usize> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        if a.row == b.row && a.col + 1 == b.col {
            Some(a.row * (self.width - 1) + a.col)
        } else if a.col == b.col && a.row + 1 == b.row {
            Some(self.height * (self.width - 1) + a.row * self.width + a.col)
        } else {
            None
        }
    }

    pub fn edge_cells(&self, edge: usize) -> (Cell, Cell) {
        let horizontal = self.height * (self.width - 1);
        if edge < horizontal {
            let (r, c) = (edge / (self.width - 1), edge % (self.width - 1));
            (Cell::new(r, c), Cell::new(r, c + 1))
        } else {
            let e = edge - horizontal;
            let (r, c) = (e / self.width, e % self.width);
            (Cell::new(r, c), Cell::new(r + 1, c))
        }
    }

    pub fn is_blocked(&self, a: Cell, b: Cell) -> bool {
        self.edge_between(a, b).is_none_or(|e| self.walls[e])
    }

    /// Cell reached by moving from `c` in `dir`; unchanged at walls and borders.
    pub fn move_from(&self, c: Cell, dir: Direction) -> Cell {
        let target = match dir {
            Direction::North if c.row > 0 => Cell::new(c.row - 1, c.col),
            Direction::South if c.row + 1 < self.height => Cell::new(c.row + 1, c.col),
            Direction::East if c.col + 1 < self.width => Cell::new(c.row, c.col + 1),
            Direction::West if c.col > 0 => Cell::new(c.row, c.col - 1),
            _ => return c,
        };
        if self.is_blocked(c, target) {
            c
        } else {
            target
        }
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_cells()];
        let mut queue = VecDeque::from([Cell::new(0, 0)]);
        seen[0] = true;
        let mut count = 1;
        while let Some(c) = queue.pop_front() {
            for d in Direction::ALL {
                let n = self.move_from(c, d);
                let i = self.cell_index(n);
                if !seen[i] {
                    seen[i] = true;
                    count += 1;
                    queue.push_back(n);
                }
            }
        }
        count == self.num_cells()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Self::North, Self::South, Self::East, Self::West];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Move(Direction),
    Done,
    Arrived,
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvKind {
    GN,
    MP,
    PD,
    ON,
}

const MOVES: [Action; 4] = [
    Action::Move(Direction::North),
    Action::Move(Direction::South),
    Action::Move(Direction::East),
    Action::Move(Direction::West),
];

impl EnvKind {
    pub fn actions(self) -> &'static [Action] {
        const GN: [Action; 5] = [MOVES[0], MOVES[1], MOVES[2], MOVES[3], Action::Done];
        const ARRIVE: [Action; 5] = [MOVES[0], MOVES[1], MOVES[2], MOVES[3], Action::Arrived];
        const PD: [Action; 6] = [MOVES[0], MOVES[1], MOVES[2], MOVES[3], Action::Pickup, Action::Dropoff];
        match self {
            Self::GN => &GN,
            Self::MP | Self::ON => &ARRIVE,
            Self::PD => &PD,
        }
    }

    pub fn num_actions(self) -> usize {
        self.actions().len()
    }

    /// Entity cells a task of this kind places on the grid.
    pub fn num_entity_cells(self, entity_count: usize) -> usize {
        match self {
            Self::GN => 1,
            Self::MP | Self::ON => entity_count,
            Self::PD => 2 * entity_count,
        }
    }

    pub fn default_entity_count(self) -> usize {
        match self {
            Self::GN => 1,
            Self::MP | Self::PD => 2,
            Self::ON => 5,
        }
    }

    /// Status bits appended to the cell one-hot in [`TaskMdp::state_features`].
    pub fn status_width(self, entity_count: usize) -> usize {
        match self {
            Self::GN => 0,
            Self::MP | Self::ON => entity_count,
            Self::PD => 2 * entity_count,
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "GN" => Ok(Self::GN),
            "MP" => Ok(Self::MP),
            "PD" => Ok(Self::PD),
            "ON" => Ok(Self::ON),
            _ => Err(format!("unknown environment `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContextSpace {
    EL,
    CM,
    PO,
}

impl std::str::FromStr for ContextSpace {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "EL" => Ok(Self::EL),
            "CM" => Ok(Self::CM),
            "PO" => Ok(Self::PO),
            _ => Err(format!("unknown context space `{s}`")),
        }
    }
}

pub fn is_supported_pairing(env: EnvKind, space: ContextSpace) -> bool {
    matches!(
        (env, space),
        (EnvKind::GN | EnvKind::MP | EnvKind::PD, ContextSpace::EL | ContextSpace::CM)
            | (EnvKind::ON, ContextSpace::PO)
    )
}

mod bitstring {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&bits.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let s = String::deserialize(d)?;
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(serde::de::Error::custom(format!("invalid wall bit `{c}`"))),
            })
            .collect()
    }
}

/// One member of a context space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "space", content = "payload")]
pub enum Context {
    /// Entity cells; for PD, pick-up and destination alternate per passenger.
    EL(Vec<Cell>),
    /// Wall bit per interior edge.
    CM(#[serde(with = "bitstring")] Vec<bool>),
    /// Zero-based entity indices in visiting order.
    PO(Vec<usize>),
}

impl Context {
    pub fn space(&self) -> ContextSpace {
        match self {
            Self::EL(_) => ContextSpace::EL,
            Self::CM(_) => ContextSpace::CM,
            Self::PO(_) => ContextSpace::PO,
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EL(cells) => {
                let parts: Vec<String> = cells.iter().map(|c| format!("{},{}", c.row, c.col)).collect();
                write!(f, "EL {}", parts.join(" "))
            }
            Self::CM(bits) => {
                write!(f, "CM ")?;
                bits.iter().try_for_each(|&b| write!(f, "{}", if b { '1' } else { '0' }))
            }
            Self::PO(order) => {
                let parts: Vec<String> = order.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "PO {}", parts.join(","))
            }
        }
    }
}

/// A task family: environment kind, context space and shared defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Cmdp {
    pub env: EnvKind,
    pub space: ContextSpace,
    pub base_map: GridMap,
    pub entity_count: usize,
    pub gamma: f64,
    pub max_steps: u32,
    /// Inclusive range for the number of walls in sampled CM contexts.
    pub cm_walls: (usize, usize),
}

pub const DEFAULT_MAX_STEPS: u32 = 200;
pub const DEFAULT_CM_WALLS: (usize, usize) = (2, 10);

impl Cmdp {
    pub fn new(env: EnvKind, space: ContextSpace) -> Result<Self, GridError> {
        Self::with_size(env, space, 6, 6, env.default_entity_count())
    }

    pub fn with_size(
        env: EnvKind,
        space: ContextSpace,
        width: usize,
        height: usize,
        entity_count: usize,
    ) -> Result<Self, GridError> {
        if !is_supported_pairing(env, space) {
            return Err(GridError::UnsupportedPairing(env, space));
        }
        if entity_count == 0 || (env == EnvKind::GN && entity_count != 1) {
            return Err(GridError::InvalidContext(format!(
                "invalid entity count {entity_count} for {env:?}"
            )));
        }
        if env.num_entity_cells(entity_count) >= width * height {
            return Err(GridError::InvalidMap("too many entities for the grid".into()));
        }
        Ok(Self {
            env,
            space,
            base_map: GridMap::open(width, height),
            entity_count,
            gamma: 0.99,
            max_steps: DEFAULT_MAX_STEPS,
            cm_walls: DEFAULT_CM_WALLS,
        })
    }

    pub fn num_entity_cells(&self) -> usize {
        self.env.num_entity_cells(self.entity_count)
    }

    /// Fixed entity cells used when the context does not place entities:
    /// the four corners first, then the remaining cells in row-major order.
    pub fn default_entities(&self) -> Vec<Cell> {
        let (h, w) = (self.base_map.height(), self.base_map.width());
        let corners = [
            Cell::new(h - 1, w - 1),
            Cell::new(0, 0),
            Cell::new(0, w - 1),
            Cell::new(h - 1, 0),
        ];
        let mut seen = HashSet::new();
        let mut cells = Vec::new();
        for c in corners.into_iter().chain(self.base_map.cells()) {
            if seen.insert(c) {
                cells.push(c);
            }
        }
        cells.truncate(self.num_entity_cells());
        cells
    }

    /// Width of the controllable context encoding.
    pub fn ctl_width(&self) -> usize {
        match self.space {
            ContextSpace::EL => 2 * self.num_entity_cells(),
            ContextSpace::CM => self.base_map.num_edges(),
            ContextSpace::PO => self.entity_count,
        }
    }

    pub fn state_width(&self) -> usize {
        self.base_map.num_cells() + self.env.status_width(self.entity_count)
    }

    pub fn validate_context(&self, context: &Context) -> Result<(), GridError> {
        self.instantiate(context).map(|_| ())
    }

    /// Builds the task induced by `context`.
    pub fn instantiate(&self, context: &Context) -> Result<TaskMdp, GridError> {
        let invalid = |m: String| Err(GridError::InvalidContext(m));
        if context.space() != self.space {
            return invalid(format!("{:?} context for a {:?} family", context.space(), self.space));
        }
        let mut map = self.base_map.clone();
        let mut entities = self.default_entities();
        let mut order: Vec<usize> = (0..self.entity_count).collect();
        match context {
            Context::EL(cells) => {
                if cells.len() != self.num_entity_cells() {
                    return invalid(format!("expected {} entity cells, got {}", self.num_entity_cells(), cells.len()));
                }
                if let Some(c) = cells.iter().find(|c| !map.contains(**c)) {
                    return invalid(format!("entity cell {c} is out of bounds"));
                }
                if cells.iter().collect::<HashSet<_>>().len() != cells.len() {
                    return invalid("entity cells must be distinct".into());
                }
                entities = cells.clone();
            }
            Context::CM(bits) => {
                map = GridMap::with_walls(map.width(), map.height(), bits.clone())
                    .map_err(|e| GridError::InvalidContext(e.to_string()))?;
            }
            Context::PO(perm) => {
                let mut sorted = perm.clone();
                sorted.sort_unstable();
                if sorted != order {
                    return invalid(format!("{perm:?} is not a permutation of 0..{}", self.entity_count));
                }
                order = perm.clone();
            }
        }
        Ok(TaskMdp {
            env: self.env,
            map,
            entities,
            order,
            entity_count: self.entity_count,
            max_steps: self.max_steps,
        })
    }

    /// Number of distinct valid contexts (approximate for CM).
    pub fn context_count(&self) -> f64 {
        match self.space {
            ContextSpace::EL => {
                let n = self.base_map.num_cells() as f64;
                (0..self.num_entity_cells()).map(|i| n - i as f64).product()
            }
            ContextSpace::CM => {
                let e = self.base_map.num_edges() as u64;
                let (lo, hi) = self.cm_walls;
                (lo..=hi.min(e as usize)).map(|k| binomial(e, k as u64)).sum()
            }
            ContextSpace::PO => (1..=self.entity_count).map(|i| i as f64).product(),
        }
    }

    fn random_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Context {
        match self.space {
            ContextSpace::EL => {
                let cells = index::sample(rng, self.base_map.num_cells(), self.num_entity_cells());
                Context::EL(cells.iter().map(|i| self.base_map.cell_at(i)).collect())
            }
            ContextSpace::CM => loop {
                let edges = self.base_map.num_edges();
                let (lo, hi) = self.cm_walls;
                let k = rng.gen_range(lo..=hi.min(edges));
                let mut bits = vec![false; edges];
                for e in index::sample(rng, edges, k) {
                    bits[e] = true;
                }
                let map = GridMap {
                    walls: bits,
                    ..self.base_map.clone()
                };
                if map.is_connected() {
                    break Context::CM(map.walls);
                }
            },
            ContextSpace::PO => {
                let mut order: Vec<usize> = (0..self.entity_count).collect();
                order.shuffle(rng);
                Context::PO(order)
            }
        }
    }

    fn enumerate_contexts(&self) -> Option<Vec<Context>> {
        const LIMIT: f64 = 100_000.0;
        if self.space == ContextSpace::CM || self.context_count() > LIMIT {
            return None;
        }
        let mut out = Vec::new();
        match self.space {
            ContextSpace::EL => {
                let cells: Vec<Cell> = self.base_map.cells().collect();
                permutations(cells.len(), self.num_entity_cells(), &mut |p| {
                    out.push(Context::EL(p.iter().map(|&i| cells[i]).collect()))
                });
            }
            ContextSpace::PO => permutations(self.entity_count, self.entity_count, &mut |p| {
                out.push(Context::PO(p.to_vec()))
            }),
            ContextSpace::CM => unreachable!(),
        }
        Some(out)
    }

    /// Draws `n_src + n_tgt` distinct valid contexts uniformly and splits them
    /// into disjoint source and target sets.
    pub fn sample_contexts<R: Rng + ?Sized>(
        &self,
        n_src: usize,
        n_tgt: usize,
        rng: &mut R,
    ) -> Result<(Vec<Context>, Vec<Context>), GridError> {
        let n = n_src + n_tgt;
        let available = self.context_count();
        if n as f64 > available {
            return Err(GridError::InsufficientContexts {
                requested: n,
                available,
            });
        }
        let mut all = match self.enumerate_contexts() {
            Some(pool) => index::sample(rng, pool.len(), n)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect(),
            None => {
                let mut seen = HashSet::with_capacity(n);
                let mut out = Vec::with_capacity(n);
                while out.len() < n {
                    let c = self.random_context(rng);
                    if seen.insert(c.clone()) {
                        out.push(c);
                    }
                }
                out
            }
        };
        let tgt = all.split_off(n_src);
        Ok((all, tgt))
    }

    /// Controllable context encoding, scaled to `[0, 1]`.
    pub fn ctl_features(&self, context: &Context) -> Vec<f64> {
        let scale = |v: usize, size: usize| if size > 1 { v as f64 / (size - 1) as f64 } else { 0.0 };
        match context {
            Context::EL(cells) => cells
                .iter()
                .flat_map(|c| [scale(c.row, self.base_map.height()), scale(c.col, self.base_map.width())])
                .collect(),
            Context::CM(bits) => bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            Context::PO(order) => {
                let mut pos = vec![0.0; order.len()];
                for (k, &entity) in order.iter().enumerate() {
                    pos[entity] = scale(k, order.len());
                }
                pos
            }
        }
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn permutations(n: usize, k: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(n: usize, k: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(n, k, used, cur, visit);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(n, k, &mut vec![false; n], &mut Vec::with_capacity(k), visit);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityStatus {
    /// Not yet visited / passenger waiting.
    Pending,
    /// Passenger in the vehicle (PD only).
    Carried,
    /// Visited / delivered.
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub agent: Cell,
    pub status: Vec<EntityStatus>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next: EnvState,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
}

/// A single context-induced task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMdp {
    pub env: EnvKind,
    pub map: GridMap,
    /// GN: destination; MP/ON: destinations; PD: pick-up, destination per passenger.
    pub entities: Vec<Cell>,
    /// Visiting order (ON); identity otherwise.
    pub order: Vec<usize>,
    pub entity_count: usize,
    pub max_steps: u32,
}

impl TaskMdp {
    pub fn num_actions(&self) -> usize {
        self.env.num_actions()
    }

    pub fn action(&self, index: usize) -> Action {
        self.env.actions()[index]
    }

    pub fn pickup_cell(&self, passenger: usize) -> Cell {
        self.entities[2 * passenger]
    }

    pub fn dropoff_cell(&self, passenger: usize) -> Cell {
        self.entities[2 * passenger + 1]
    }

    fn status_len(&self) -> usize {
        match self.env {
            EnvKind::GN => 0,
            _ => self.entity_count,
        }
    }

    /// Cells an episode may start from.
    pub fn start_cells(&self) -> Vec<Cell> {
        self.map
            .cells()
            .filter(|c| !self.entities.contains(c))
            .collect()
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let starts = self.start_cells();
        self.initial_state(starts[rng.gen_range(0..starts.len())])
    }

    pub fn initial_state(&self, agent: Cell) -> EnvState {
        EnvState {
            agent,
            status: vec![EntityStatus::Pending; self.status_len()],
        }
    }

    /// Pure transition function (no step cap).
    pub fn step(&self, s: &EnvState, action: Action) -> StepResult {
        let mut next = s.clone();
        let mut done = false;
        match (self.env, action) {
            (_, Action::Move(dir)) => next.agent = self.map.move_from(s.agent, dir),
            (EnvKind::GN, Action::Done) => done = s.agent == self.entities[0],
            (EnvKind::MP, Action::Arrived) => {
                if let Some(j) = (0..self.entity_count)
                    .find(|&j| self.entities[j] == s.agent && s.status[j] == EntityStatus::Pending)
                {
                    next.status[j] = EntityStatus::Complete;
                    done = next.status.iter().all(|&st| st == EntityStatus::Complete);
                }
            }
            (EnvKind::ON, Action::Arrived) => {
                let visited = s.status.iter().filter(|&&st| st == EntityStatus::Complete).count();
                if visited < self.entity_count {
                    let j = self.order[visited];
                    if self.entities[j] == s.agent {
                        next.status[j] = EntityStatus::Complete;
                        done = visited + 1 == self.entity_count;
                    }
                }
            }
            (EnvKind::PD, Action::Pickup) => {
                if let Some(j) = (0..self.entity_count)
                    .find(|&j| self.pickup_cell(j) == s.agent && s.status[j] == EntityStatus::Pending)
                {
                    next.status[j] = EntityStatus::Carried;
                }
            }
            (EnvKind::PD, Action::Dropoff) => {
                if let Some(j) = (0..self.entity_count)
                    .find(|&j| self.dropoff_cell(j) == s.agent && s.status[j] == EntityStatus::Carried)
                {
                    next.status[j] = EntityStatus::Complete;
                    done = next.status.iter().all(|&st| st == EntityStatus::Complete);
                }
            }
            _ => {}
        }
        StepResult {
            next,
            reward: if done { 1.0 } else { 0.0 },
            done,
            truncated: false,
        }
    }

    /// One-hot agent cell followed by status bits.
    pub fn state_features(&self, s: &EnvState) -> Vec<f64> {
        let mut out = vec![0.0; self.map.num_cells()];
        out[self.map.cell_index(s.agent)] = 1.0;
        self.extend_status_features(s, &mut out);
        out
    }

    pub fn extend_status_features(&self, s: &EnvState, out: &mut Vec<f64>) {
        let bit = |b: bool| if b { 1.0 } else { 0.0 };
        match self.env {
            EnvKind::GN => {}
            EnvKind::MP | EnvKind::ON => out.extend(s.status.iter().map(|&st| bit(st == EntityStatus::Complete))),
            EnvKind::PD => {
                for &st in &s.status {
                    out.push(bit(st == EntityStatus::Carried));
                    out.push(bit(st == EntityStatus::Complete));
                }
            }
        }
    }

    /// ASCII rendering: `|` and `—` mark walls, entities are letters or digits.
    pub fn render(&self, agent: Option<Cell>) -> String {
        let (h, w) = (self.map.height(), self.map.width());
        let glyph = |c: Cell| -> char {
            if agent == Some(c) {
                return '@';
            }
            match self.entities.iter().position(|&e| e == c) {
                None => '.',
                Some(i) => match self.env {
                    EnvKind::GN => 'G',
                    EnvKind::MP => char::from_digit((i + 1) as u32 % 36, 36).unwrap_or('?'),
                    EnvKind::ON => {
                        let k = self.order.iter().position(|&o| o == i).unwrap_or(0);
                        char::from_digit((k + 1) as u32 % 36, 36).unwrap_or('?')
                    }
                    EnvKind::PD => {
                        let base = if i % 2 == 0 { b'a' } else { b'A' };
                        (base + (i / 2) as u8 % 26) as char
                    }
                },
            }
        };
        let mut out = String::new();
        out.push('+');
        out.push_str(&"—+".repeat(w));
        out.push('\n');
        for r in 0..h {
            out.push('|');
            for c in 0..w {
                out.push(glyph(Cell::new(r, c)));
                let wall = c + 1 == w || self.map.is_blocked(Cell::new(r, c), Cell::new(r, c + 1));
                out.push(if wall { '|' } else { ' ' });
            }
            out.push('\n');
            out.push('+');
            for c in 0..w {
                let wall = r + 1 == h || self.map.is_blocked(Cell::new(r, c), Cell::new(r + 1, c));
                out.push(if wall { '—' } else { ' ' });
                out.push('+');
            }
            out.push('\n');
        }
        out
    }
}

/// An episode in progress: enforces the step cap and refuses steps after the end.
#[derive(Debug, Clone)]
pub struct Episode {
    pub state: EnvState,
    pub steps: u32,
    pub finished: bool,
}

impl Episode {
    pub fn new(state: EnvState) -> Self {
        Self {
            state,
            steps: 0,
            finished: false,
        }
    }

    pub fn step(&mut self, task: &TaskMdp, action: Action) -> Result<StepResult, GridError> {
        if self.finished {
            return Err(GridError::EpisodeFinished);
        }
        let mut result = task.step(&self.state, action);
        self.steps += 1;
        result.truncated = !result.done && self.steps >= task.max_steps;
        self.finished = result.done || result.truncated;
        self.state = result.next.clone();
        Ok(result)
    }
}
