//! Context representations and observation assembly.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Cmdp, Context, EnvState, TaskMdp};
use crate::planning::{shaped_reward, PlanningError, RmValueTable};
use crate::rm::{Label, RewardMachine, RmRunState, StateId};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ReprError {
    #[error("unknown representation `{0}`")]
    UnknownName(String),
    #[error("context is not registered with the one-hot encoder")]
    PcgUnregistered,
    #[error("one-hot encoder capacity {capacity} exceeded by {requested} contexts")]
    PcgCapacity { capacity: usize, requested: usize },
    #[error("observation width {got} differs from the session width {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("configuration needs a reward machine but none was supplied")]
    MissingMachine,
    #[error(transparent)]
    Planning(#[from] PlanningError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BaseRepr {
    Ctl,
    Pcg,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Env,
    RmRaw,
    RmShaped,
}

/// Which signals are appended to the state features and which reward the
/// learner sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReprConfig {
    pub base: BaseRepr,
    pub use_ltl: bool,
    pub use_dtl: bool,
    pub reward_mode: RewardMode,
}

impl ReprConfig {
    pub fn needs_rm(&self) -> bool {
        self.use_ltl || self.use_dtl || self.reward_mode != RewardMode::Env
    }
}

impl FromStr for ReprConfig {
    type Err = ReprError;

    /// Accepts `+`-joined tokens: `CTL`, `PCG`, `NONE`, `LTL`, `DTL`, `RS`
    /// (shaped machine reward), `RM` (raw machine reward) and `C-PREP`
    /// (`DTL` with `RS`).
    fn from_str(name: &str) -> Result<Self, ReprError> {
        let unknown = || ReprError::UnknownName(name.to_string());
        let mut cfg = ReprConfig {
            base: BaseRepr::None,
            use_ltl: false,
            use_dtl: false,
            reward_mode: RewardMode::Env,
        };
        let mut base_seen = false;
        for (i, token) in name.split('+').enumerate() {
            match token.trim().to_ascii_uppercase().as_str() {
                "CTL" | "PCG" | "NONE" if i == 0 => {
                    base_seen = true;
                    cfg.base = match token.trim().to_ascii_uppercase().as_str() {
                        "CTL" => BaseRepr::Ctl,
                        "PCG" => BaseRepr::Pcg,
                        _ => BaseRepr::None,
                    };
                }
                "LTL" if !cfg.use_ltl => cfg.use_ltl = true,
                "DTL" if !cfg.use_dtl => cfg.use_dtl = true,
                "RS" if cfg.reward_mode == RewardMode::Env => cfg.reward_mode = RewardMode::RmShaped,
                "RM" if cfg.reward_mode == RewardMode::Env => cfg.reward_mode = RewardMode::RmRaw,
                "C-PREP" | "CPREP" if !cfg.use_dtl && cfg.reward_mode == RewardMode::Env => {
                    cfg.use_dtl = true;
                    cfg.reward_mode = RewardMode::RmShaped;
                }
                _ => return Err(unknown()),
            }
        }
        if !base_seen && !cfg.needs_rm() {
            return Err(unknown());
        }
        Ok(cfg)
    }
}

impl fmt::Display for ReprConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<&str> = Vec::new();
        match self.base {
            BaseRepr::Ctl => parts.push("CTL"),
            BaseRepr::Pcg => parts.push("PCG"),
            BaseRepr::None if !self.needs_rm() => parts.push("NONE"),
            BaseRepr::None => {}
        }
        if self.use_ltl {
            parts.push("LTL");
        }
        match (self.use_dtl, self.reward_mode) {
            (true, RewardMode::RmShaped) => parts.push("C-PREP"),
            (dtl, mode) => {
                if dtl {
                    parts.push("DTL");
                }
                match mode {
                    RewardMode::RmShaped => parts.push("RS"),
                    RewardMode::RmRaw => parts.push("RM"),
                    RewardMode::Env => {}
                }
            }
        }
        write!(f, "{}", parts.join("+"))
    }
}

/// One-hot context identities for a fixed set of contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct PcgEncoder {
    capacity: usize,
    index_of: HashMap<Context, usize>,
}

impl PcgEncoder {
    /// Assigns shuffled one-hot positions to `contexts`.
    pub fn new<R: Rng + ?Sized>(contexts: &[Context], capacity: usize, rng: &mut R) -> Result<Self, ReprError> {
        if contexts.len() > capacity {
            return Err(ReprError::PcgCapacity {
                capacity,
                requested: contexts.len(),
            });
        }
        let mut slots: Vec<usize> = (0..contexts.len()).collect();
        slots.shuffle(rng);
        Ok(Self {
            capacity,
            index_of: contexts.iter().cloned().zip(slots).collect(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn encode(&self, context: &Context) -> Result<Vec<f64>, ReprError> {
        let i = *self.index_of.get(context).ok_or(ReprError::PcgUnregistered)?;
        let mut out = vec![0.0; self.capacity];
        out[i] = 1.0;
        Ok(out)
    }
}

/// Assembles `[state | base | LTL | DTL]` vectors of a fixed session width.
#[derive(Debug, Clone)]
pub struct ObservationBuilder {
    pub cfg: ReprConfig,
    cmdp: Cmdp,
    pcg: Option<PcgEncoder>,
    symbol_width: usize,
    width: usize,
}

impl ObservationBuilder {
    /// `symbol_width` is the family's shared vocabulary size (ignored when no
    /// label segment is used).
    pub fn new(cfg: ReprConfig, cmdp: &Cmdp, pcg: Option<PcgEncoder>, symbol_width: usize) -> Result<Self, ReprError> {
        let base = match cfg.base {
            BaseRepr::Ctl => cmdp.ctl_width(),
            BaseRepr::Pcg => pcg.as_ref().ok_or(ReprError::PcgUnregistered)?.capacity(),
            BaseRepr::None => 0,
        };
        let labels = symbol_width * (cfg.use_ltl as usize + cfg.use_dtl as usize);
        Ok(Self {
            cfg,
            cmdp: cmdp.clone(),
            pcg,
            symbol_width,
            width: cmdp.state_width() + base + labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cmdp(&self) -> &Cmdp {
        &self.cmdp
    }

    pub fn build(
        &self,
        task: &TaskMdp,
        s: &EnvState,
        context: &Context,
        run: Option<&RmRunState>,
        dtl: Option<&Label>,
    ) -> Result<Vec<f64>, ReprError> {
        let mut out = Vec::with_capacity(self.width);
        out.extend(task.state_features(s));
        match self.cfg.base {
            BaseRepr::Ctl => out.extend(self.cmdp.ctl_features(context)),
            BaseRepr::Pcg => out.extend(self.pcg.as_ref().ok_or(ReprError::PcgUnregistered)?.encode(context)?),
            BaseRepr::None => {}
        }
        if self.cfg.use_ltl {
            let run = run.ok_or(ReprError::MissingMachine)?;
            self.push_label(&mut out, &run.last_label)?;
        }
        if self.cfg.use_dtl {
            self.push_label(&mut out, dtl.ok_or(ReprError::MissingMachine)?)?;
        }
        if out.len() != self.width {
            return Err(ReprError::DimensionMismatch {
                expected: self.width,
                got: out.len(),
            });
        }
        Ok(out)
    }

    fn push_label(&self, out: &mut Vec<f64>, label: &Label) -> Result<(), ReprError> {
        if label.width() != self.symbol_width {
            return Err(ReprError::DimensionMismatch {
                expected: self.symbol_width,
                got: label.width(),
            });
        }
        out.extend(label.to_features());
        Ok(())
    }
}

/// Reward handed to the learner for one step.
pub fn reward_for_agent(
    cfg: &ReprConfig,
    env_reward: f64,
    machine: Option<(&RewardMachine, &RmValueTable)>,
    u: StateId,
    label: &Label,
) -> Result<f64, ReprError> {
    match cfg.reward_mode {
        RewardMode::Env => Ok(env_reward),
        RewardMode::RmRaw => {
            let (rm, _) = machine.ok_or(ReprError::MissingMachine)?;
            Ok(rm.step(u, label).map_err(PlanningError::from)?.1)
        }
        RewardMode::RmShaped => {
            let (rm, table) = machine.ok_or(ReprError::MissingMachine)?;
            Ok(shaped_reward(rm, table, table.gamma, u, label)?)
        }
    }
}

/// The representation names used by the reported experiments.
pub const NAMED_CONFIGS: &[&str] = &[
    "CTL",
    "CTL+RS",
    "CTL+LTL+RS",
    "CTL+C-PREP",
    "C-PREP",
    "PCG",
    "PCG+RS",
    "PCG+LTL+RS",
    "PCG+C-PREP",
    "CTL+LTL",
    "CTL+DTL",
    "CTL+LTL+DTL",
    "CTL+LTL+C-PREP",
    "PCG+LTL",
    "PCG+DTL",
    "PCG+LTL+DTL",
    "PCG+LTL+C-PREP",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::generate;
    use crate::grid::{Cell, ContextSpace, EnvKind};
    use crate::planning::{desired_label, value_iteration_default, DesiredMode, RmPlan};
    use crate::rm::{parse_rm, ORDER2_TEXT};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(name: &str) -> ReprConfig {
        name.parse().unwrap()
    }

    #[test]
    fn named_configurations_map_to_components() {
        use BaseRepr::*;
        use RewardMode::*;
        let expect = |name, base, ltl, dtl, mode| {
            assert_eq!(
                cfg(name),
                ReprConfig {
                    base,
                    use_ltl: ltl,
                    use_dtl: dtl,
                    reward_mode: mode
                },
                "{name}"
            )
        };
        expect("CTL", Ctl, false, false, Env);
        expect("CTL+RS", Ctl, false, false, RmShaped);
        expect("CTL+LTL+RS", Ctl, true, false, RmShaped);
        expect("CTL+C-PREP", Ctl, false, true, RmShaped);
        expect("C-PREP", None, false, true, RmShaped);
        expect("PCG+C-PREP", Pcg, false, true, RmShaped);
        expect("CTL+DTL", Ctl, false, true, Env);
        expect("CTL+LTL+DTL", Ctl, true, true, Env);
        expect("CTL+LTL+C-PREP", Ctl, true, true, RmShaped);
        expect("CTL+RM", Ctl, false, false, RmRaw);
    }

    #[test]
    fn names_round_trip() {
        for name in NAMED_CONFIGS {
            assert_eq!(cfg(name).to_string(), *name);
        }
        for bad in ["", "XYZ", "CTL+CTL", "LTL+CTL", "CTL+RS+RS", "CTL+C-PREP+DTL"] {
            assert!(bad.parse::<ReprConfig>().is_err(), "{bad}");
        }
    }

    #[test]
    fn observation_widths() {
        let gn = Cmdp::new(EnvKind::GN, ContextSpace::EL).unwrap();
        let ctx = Context::EL(vec![Cell::new(1, 1)]);
        let task = gn.instantiate(&ctx).unwrap();
        let b = ObservationBuilder::new(cfg("CTL"), &gn, None, 10).unwrap();
        assert_eq!(b.width(), 38);
        let obs = b.build(&task, &task.initial_state(Cell::new(0, 0)), &ctx, None, None).unwrap();
        assert_eq!(obs.len(), 38);
        assert_eq!(&obs[36..], &[0.2, 0.2]);

        let on = Cmdp::new(EnvKind::ON, ContextSpace::PO).unwrap();
        let b = ObservationBuilder::new(cfg("C-PREP"), &on, None, 5).unwrap();
        assert_eq!(b.width(), 36 + 5 + 5);
    }

    #[test]
    fn ltl_starts_zero_and_dtl_follows_plan() {
        let cmdp = Cmdp::new(EnvKind::GN, ContextSpace::EL).unwrap();
        let ctx = Context::EL(vec![Cell::new(5, 5)]);
        let task = cmdp.instantiate(&ctx).unwrap();
        let g = generate(&cmdp, &ctx, (2, 2)).unwrap();
        let plan = RmPlan::new(&g.rm, 0.99).unwrap();
        let s = task.initial_state(Cell::new(0, 0));
        let run = RmRunState::starting_at(&g.rm, g.labeler.initial_state(&g.rm, &s));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dtl = desired_label(&g.rm, &plan.policy, run.current, DesiredMode::DeterministicFirst, &mut rng);
        let width = g.rm.vocabulary().len();
        let b = ObservationBuilder::new(cfg("CTL+LTL+C-PREP"), &cmdp, None, width).unwrap();
        let obs = b.build(&task, &s, &ctx, Some(&run), Some(&dtl)).unwrap();
        let ltl = &obs[38..38 + width];
        assert!(ltl.iter().all(|&x| x == 0.0));
        let dtl_seg = &obs[38 + width..];
        // from sector 1 towards sector 9, S2 and S4 tie; the first declared wins
        assert_eq!(dtl_seg.iter().sum::<f64>(), 1.0);
        assert!(dtl_seg[1] == 1.0 || dtl_seg[3] == 1.0);
        let narrow = Label::empty(width - 1);
        assert!(matches!(
            b.build(&task, &s, &ctx, Some(&run), Some(&narrow)),
            Err(ReprError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pcg_one_hot() {
        let cmdp = Cmdp::new(EnvKind::GN, ContextSpace::EL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (src, tgt) = cmdp.sample_contexts(3, 4, &mut rng).unwrap();
        let all: Vec<Context> = src.iter().chain(&tgt).cloned().collect();
        let enc = PcgEncoder::new(&all, all.len(), &mut rng).unwrap();
        let mut hot = std::collections::HashSet::new();
        for c in &all {
            let v = enc.encode(c).unwrap();
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            hot.insert(v.iter().position(|&x| x == 1.0).unwrap());
        }
        assert_eq!(hot.len(), all.len());
        let outsider = Context::EL(vec![Cell::new(9, 9)]);
        assert_eq!(enc.encode(&outsider), Err(ReprError::PcgUnregistered));
        assert!(PcgEncoder::new(&all, 2, &mut rng).is_err());
        let b = ObservationBuilder::new(cfg("PCG"), &cmdp, Some(enc), 0).unwrap();
        assert_eq!(b.width(), 36 + 7);
    }

    #[test]
    fn reward_modes() {
        let rm = parse_rm(ORDER2_TEXT).unwrap();
        let table = value_iteration_default(&rm, 0.99).unwrap();
        let p2 = rm.vocabulary().label_of(&["P2"]).unwrap();
        let m = Some((&rm, &table));
        assert_eq!(reward_for_agent(&cfg("CTL"), 1.0, None, StateId(1), &p2).unwrap(), 1.0);
        assert!(reward_for_agent(&cfg("CTL+RS"), 1.0, m, StateId(1), &p2).unwrap().abs() < 1e-12);
        assert_eq!(reward_for_agent(&cfg("CTL+RM"), 0.0, m, StateId(1), &p2).unwrap(), 1.0);
        assert_eq!(
            reward_for_agent(&cfg("CTL+RS"), 1.0, None, StateId(1), &p2),
            Err(ReprError::MissingMachine)
        );
    }
}
