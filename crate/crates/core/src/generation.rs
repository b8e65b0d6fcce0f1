//! Reward-machine generators for each task family, with matching labeling
//! functions. All machines in a family share one symbol vocabulary.

use crate::grid::{Action, Cell, Cmdp, Context, ContextSpace, EntityStatus, EnvKind, EnvState, GridError, GridMap, TaskMdp};
use crate::rm::{Guard, Label, RewardMachine, RmError, RmTransition, StateId, SymbolVocabulary};

pub const DEFAULT_SECTOR_SIZE: (usize, usize) = (2, 2);

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("{0:?} is not a permutation of 1..={1}")]
    InvalidPermutation(Vec<usize>, usize),
    #[error("sector size {0:?} does not tile a {1}x{2} grid")]
    BadSectorSize((usize, usize), usize, usize),
    #[error("entity cell {0} lies outside the map")]
    EntityOutsideMap(Cell),
    #[error("unsupported pairing {0:?} with {1:?}")]
    UnsupportedPairing(EnvKind, ContextSpace),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Rm(#[from] RmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Full,
    Partial,
}

/// Partition of the grid into equal rectangular sectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorDecomposition {
    pub sector_size: (usize, usize),
    sectors_per_row: usize,
    sector_of: Vec<usize>,
    adjacent: Vec<Vec<bool>>,
}

impl SectorDecomposition {
    /// Sector ids are row-major; two sectors are adjacent when some wall-free
    /// cell edge joins them.
    pub fn new(map: &GridMap, sector_size: (usize, usize)) -> Result<Self, GenerationError> {
        let (sr, sc) = sector_size;
        if sr == 0 || sc == 0 || !map.height().is_multiple_of(sr) || !map.width().is_multiple_of(sc) {
            return Err(GenerationError::BadSectorSize(sector_size, map.width(), map.height()));
        }
        let per_row = map.width() / sc;
        let count = per_row * (map.height() / sr);
        let sector_of: Vec<usize> = map.cells().map(|c| (c.row / sr) * per_row + c.col / sc).collect();
        let mut adjacent = vec![vec![false; count]; count];
        for e in 0..map.num_edges() {
            if map.walls()[e] {
                continue;
            }
            let (a, b) = map.edge_cells(e);
            let (sa, sb) = (sector_of[map.cell_index(a)], sector_of[map.cell_index(b)]);
            if sa != sb {
                adjacent[sa][sb] = true;
                adjacent[sb][sa] = true;
            }
        }
        Ok(Self {
            sector_size,
            sectors_per_row: per_row,
            sector_of,
            adjacent,
        })
    }

    pub fn num_sectors(&self) -> usize {
        self.adjacent.len()
    }

    pub fn sector_of(&self, map: &GridMap, c: Cell) -> usize {
        self.sector_of[map.cell_index(c)]
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacent[a][b]
    }

    pub fn neighbours(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_sectors()).filter(move |&b| self.adjacent[a][b])
    }

    pub fn sectors_per_row(&self) -> usize {
        self.sectors_per_row
    }
}

/// Maps environment transitions to labels over a generated machine's vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskLabeler {
    /// Emits `Pj` when entity `j` is marked visited on this step.
    Order { width: usize },
    /// Emits the agent's sector symbol after every step plus one symbol per
    /// successful sub-action.
    Sector {
        env: EnvKind,
        map: GridMap,
        decomp: SectorDecomposition,
        destination: Cell,
        entity_count: usize,
        width: usize,
    },
}

impl TaskLabeler {
    pub fn width(&self) -> usize {
        match self {
            Self::Order { width } | Self::Sector { width, .. } => *width,
        }
    }

    pub fn label(&self, s: &EnvState, action: Action, next: &EnvState) -> Label {
        let changed = |j: usize, from: EntityStatus, to: EntityStatus| s.status[j] == from && next.status[j] == to;
        let mut set = Vec::new();
        match self {
            Self::Order { .. } => {
                set.extend((0..s.status.len()).filter(|&j| changed(j, EntityStatus::Pending, EntityStatus::Complete)));
            }
            Self::Sector {
                env,
                map,
                decomp,
                destination,
                entity_count,
                ..
            } => {
                let k = decomp.num_sectors();
                set.push(decomp.sector_of(map, next.agent));
                match env {
                    EnvKind::GN => {
                        if action == Action::Done && s.agent == *destination {
                            set.push(k);
                        }
                    }
                    EnvKind::MP | EnvKind::ON => set.extend(
                        (0..*entity_count)
                            .filter(|&j| changed(j, EntityStatus::Pending, EntityStatus::Complete))
                            .map(|j| k + j),
                    ),
                    EnvKind::PD => {
                        for j in 0..*entity_count {
                            if changed(j, EntityStatus::Pending, EntityStatus::Carried) {
                                set.push(k + j);
                            }
                            if changed(j, EntityStatus::Carried, EntityStatus::Complete) {
                                set.push(k + entity_count + j);
                            }
                        }
                    }
                }
            }
        }
        Label::from_indices(self.width(), &set)
    }

    /// Abstract state matching the episode's first environment state.
    pub fn initial_state(&self, rm: &RewardMachine, s0: &EnvState) -> StateId {
        match self {
            Self::Order { .. } => rm.initial(),
            // status index 0 (nothing visited or picked up) occupies the first block
            Self::Sector { map, decomp, .. } => StateId(decomp.sector_of(map, s0.agent)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedRm {
    pub rm: RewardMachine,
    pub labeler: TaskLabeler,
    pub resolution: Resolution,
}

/// Order template: `u0..un`, one step per entity in `order` (1-based ids).
pub fn gen_order_rm(order: &[usize], n: usize) -> Result<GeneratedRm, GenerationError> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if n == 0 || sorted != (1..=n).collect::<Vec<_>>() {
        return Err(GenerationError::InvalidPermutation(order.to_vec(), n));
    }
    let vocabulary = SymbolVocabulary::new((1..=n).map(|j| format!("P{j}")))?;
    let states = (0..=n).map(|k| format!("u{k}")).collect();
    let mut transitions = Vec::with_capacity(2 * n);
    for (k, &entity) in order.iter().enumerate() {
        let sym = entity - 1;
        transitions.push(RmTransition {
            from: StateId(k),
            guard: Guard::negative(sym),
            to: StateId(k),
            reward: 0.0,
        });
        transitions.push(RmTransition {
            from: StateId(k),
            guard: Guard::positive(sym),
            to: StateId(k + 1),
            reward: if k + 1 == n { 1.0 } else { 0.0 },
        });
    }
    let rm = RewardMachine::new(vocabulary, states, StateId(0), &[StateId(n)], transitions)?;
    Ok(GeneratedRm {
        rm,
        labeler: TaskLabeler::Order { width: n },
        resolution: Resolution::Full,
    })
}

/// Per-entity progress encoded as one index per non-final status combination.
struct StatusSpace {
    env: EnvKind,
    n: usize,
}

impl StatusSpace {
    fn radix(&self) -> usize {
        match self.env {
            EnvKind::GN => 1,
            EnvKind::MP | EnvKind::ON => 2,
            EnvKind::PD => 3,
        }
    }

    fn len(&self) -> usize {
        match self.env {
            EnvKind::GN => 1,
            _ => self.radix().pow(self.n as u32) - 1,
        }
    }

    fn digits(&self, index: usize) -> Vec<usize> {
        if self.env == EnvKind::GN {
            return vec![];
        }
        let r = self.radix();
        (0..self.n).map(|j| (index / r.pow(j as u32)) % r).collect()
    }

    /// `None` when every entity is complete.
    fn index(&self, digits: &[usize]) -> Option<usize> {
        let r = self.radix();
        let idx = digits.iter().rev().fold(0, |acc, &d| acc * r + d);
        (idx < self.len()).then_some(idx)
    }

    fn name(&self, index: usize) -> String {
        let glyphs: &[char] = match self.env {
            EnvKind::PD => &['w', 'c', 'd'],
            _ => &['0', '1'],
        };
        self.digits(index).iter().map(|&d| glyphs[d]).collect()
    }
}

/// Sector machine: abstract states are (agent sector, entity progress) plus
/// one terminal goal state.
pub fn gen_sector_rm(
    env: EnvKind,
    map: &GridMap,
    entities: &[Cell],
    entity_count: usize,
    decomp: &SectorDecomposition,
) -> Result<GeneratedRm, GenerationError> {
    if env == EnvKind::ON {
        return Err(GenerationError::UnsupportedPairing(env, ContextSpace::EL));
    }
    if let Some(&c) = entities.iter().find(|&&c| !map.contains(c)) {
        return Err(GenerationError::EntityOutsideMap(c));
    }
    let k = decomp.num_sectors();
    let n = if env == EnvKind::GN { 1 } else { entity_count };
    let mut symbols: Vec<String> = (1..=k).map(|i| format!("S{i}")).collect();
    match env {
        EnvKind::GN => symbols.push("G".into()),
        EnvKind::MP => symbols.extend((1..=n).map(|j| format!("A{j}"))),
        EnvKind::PD => {
            symbols.extend((1..=n).map(|j| format!("P{j}")));
            symbols.extend((1..=n).map(|j| format!("D{j}")));
        }
        EnvKind::ON => unreachable!(),
    }
    let width = symbols.len();
    let vocabulary = SymbolVocabulary::new(symbols)?;
    let status = StatusSpace { env, n };
    let goal = StateId(status.len() * k);
    let id = |st: usize, sector: usize| StateId(st * k + sector);

    let mut states = Vec::with_capacity(goal.0 + 1);
    for st in 0..status.len() {
        for sector in 0..k {
            states.push(match env {
                EnvKind::GN => format!("s{}", sector + 1),
                _ => format!("s{}_{}", sector + 1, status.name(st)),
            });
        }
    }
    states.push("goal".into());

    let sector_of = |c: Cell| decomp.sector_of(map, c);
    let mut transitions = Vec::new();
    for st in 0..status.len() {
        let digits = status.digits(st);
        for sector in 0..k {
            let from = id(st, sector);
            let mut event = |symbol: usize, next_digits: Option<Vec<usize>>| {
                let target = next_digits.and_then(|d| status.index(&d));
                transitions.push(RmTransition {
                    from,
                    guard: Guard::positive(symbol),
                    to: target.map_or(goal, |t| id(t, sector)),
                    reward: if target.is_none() { 1.0 } else { 0.0 },
                });
            };
            match env {
                EnvKind::GN => {
                    if sector_of(entities[0]) == sector {
                        event(k, None);
                    }
                }
                EnvKind::MP => {
                    for j in 0..n {
                        if digits[j] == 0 && sector_of(entities[j]) == sector {
                            let mut d = digits.clone();
                            d[j] = 1;
                            event(k + j, Some(d));
                        }
                    }
                }
                EnvKind::PD => {
                    for j in 0..n {
                        if digits[j] == 0 && sector_of(entities[2 * j]) == sector {
                            let mut d = digits.clone();
                            d[j] = 1;
                            event(k + j, Some(d));
                        }
                        if digits[j] == 1 && sector_of(entities[2 * j + 1]) == sector {
                            let mut d = digits.clone();
                            d[j] = 2;
                            event(k + n + j, Some(d));
                        }
                    }
                }
                EnvKind::ON => unreachable!(),
            }
            for next in decomp.neighbours(sector) {
                transitions.push(RmTransition {
                    from,
                    guard: Guard::positive(next),
                    to: id(st, next),
                    reward: 0.0,
                });
            }
        }
    }

    let rm = RewardMachine::new(vocabulary, states, id(0, 0), &[goal], transitions)?;
    Ok(GeneratedRm {
        rm,
        labeler: TaskLabeler::Sector {
            env,
            map: map.clone(),
            decomp: decomp.clone(),
            destination: entities[0],
            entity_count: n,
            width,
        },
        resolution: Resolution::Partial,
    })
}

/// Machine for one task: order machines for ordered navigation, sector
/// machines for everything else.
pub fn generate_for_task(task: &TaskMdp, sector_size: (usize, usize)) -> Result<GeneratedRm, GenerationError> {
    match task.env {
        EnvKind::ON => {
            let order: Vec<usize> = task.order.iter().map(|j| j + 1).collect();
            gen_order_rm(&order, task.entity_count)
        }
        env => {
            let decomp = SectorDecomposition::new(&task.map, sector_size)?;
            gen_sector_rm(env, &task.map, &task.entities, task.entity_count, &decomp)
        }
    }
}

pub fn generate(cmdp: &Cmdp, context: &Context, sector_size: (usize, usize)) -> Result<GeneratedRm, GenerationError> {
    if !crate::grid::is_supported_pairing(cmdp.env, context.space()) {
        return Err(GenerationError::UnsupportedPairing(cmdp.env, context.space()));
    }
    let task = cmdp.instantiate(context)?;
    generate_for_task(&task, sector_size)
}
