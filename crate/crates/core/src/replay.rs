//! Logged streams and the two replay evaluators.
//!
//! A logged stream is a sequence of `(action, reward)` events collected with
//! actions drawn uniformly at random. Replay walks the stream once: at each
//! event the policy proposes an action, and the event is accepted when the
//! proposal matches the logged action (exactly, for finite arms) or lies
//! within `δ` of it (continuous actions). Accepted events update the policy
//! with the *proposed* action and the logged reward; rejected events leave
//! the policy untouched.
//!
//! With uniform logging on `[lo, hi]` and an interior proposal, an event is
//! accepted with probability `2δ / (hi - lo)`, so a log of length `L` yields
//! `E[T] = 2δL / (hi - lo)` accepted interactions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::Policy;
use crate::reward_models::{ActionRange, RewardModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub index: u64,
    pub action: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedStream {
    events: Vec<LoggedEvent>,
    range: ActionRange,
}

impl LoggedStream {
    /// Validates that the stream is non-empty, indices strictly increase and
    /// all values are finite.
    pub fn new(events: Vec<LoggedEvent>, range: ActionRange) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyStream);
        }
        for w in events.windows(2) {
            if w[1].index <= w[0].index {
                return Err(Error::InvalidParameter {
                    name: "index",
                    reason: format!("indices must strictly increase ({} then {})", w[0].index, w[1].index),
                });
            }
        }
        if let Some(e) = events.iter().find(|e| !e.action.is_finite() || !e.reward.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "event",
                reason: format!("non-finite value at index {}", e.index),
            });
        }
        Ok(Self { events, range })
    }

    pub fn events(&self) -> &[LoggedEvent] {
        &self.events
    }

    pub fn range(&self) -> ActionRange {
        self.range
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// `L` events with i.i.d. uniform actions on the model's range and rewards
/// drawn from the model.
pub fn generate_logged_stream<R: Rng + ?Sized>(model: &RewardModel, length: usize, rng: &mut R) -> Result<LoggedStream> {
    let range = model.range();
    let events = (0..length as u64)
        .map(|index| {
            let action = range.sample(rng);
            let reward = model.sample_reward(action, rng);
            LoggedEvent { index, action, reward }
        })
        .collect();
    LoggedStream::new(events, range)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    delta: f64,
}

impl ReplayConfig {
    /// `delta` must be positive and below the range width.
    pub fn new(delta: f64, range: ActionRange) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0 && delta < range.width()) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("need 0 < delta < {}, got {delta}", range.width()),
            });
        }
        Ok(Self { delta })
    }

    /// Skips the `delta < width` check. Used to exercise the accept-everything
    /// regime.
    pub fn unchecked(delta: f64) -> Self {
        Self { delta }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Policies are always updated with the proposed action, never the logged one.
    pub fn update_with_proposal(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stream_index: u64,
    pub action: f64,
    pub reward: f64,
}

/// Accepted interactions of one run, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    records: Vec<TraceRecord>,
    cumulative_reward: f64,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { records: Vec::with_capacity(n), cumulative_reward: 0.0 }
    }

    pub fn push(&mut self, stream_index: u64, action: f64, reward: f64) {
        debug_assert!(self.records.last().is_none_or(|r| r.stream_index < stream_index));
        self.records.push(TraceRecord { stream_index, action, reward });
        self.cumulative_reward += reward;
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Number of accepted interactions `T`.
    pub fn accepted(&self) -> usize {
        self.records.len()
    }

    /// Total reward `R_c`.
    pub fn cumulative_reward(&self) -> f64 {
        self.cumulative_reward
    }

    pub fn mean_reward(&self) -> Option<f64> {
        (!self.records.is_empty()).then(|| self.cumulative_reward / self.records.len() as f64)
    }
}

/// Exact-match replay for finite action sets.
pub fn replay_discrete<P: Policy + ?Sized>(policy: &mut P, stream: &LoggedStream, rng: &mut dyn RngCore) -> Result<Trace> {
    let mut trace = Trace::new();
    for e in stream.events() {
        let proposal = policy.propose(rng)?;
        if proposal == e.action {
            policy.update(e.action, e.reward)?;
            trace.push(e.index, e.action, e.reward);
        }
    }
    Ok(trace)
}

/// δ-tolerance replay for continuous actions.
///
/// One proposal is drawn per stream event, including rejected ones. An event
/// is accepted when `|a - proposal| < δ` (strict).
pub fn replay_cab<P: Policy + ?Sized>(
    policy: &mut P,
    stream: &LoggedStream,
    cfg: &ReplayConfig,
    rng: &mut dyn RngCore,
) -> Result<Trace> {
    let expected = acceptance_probability(cfg.delta(), stream.range()) * stream.len() as f64;
    let mut trace = Trace::with_capacity(expected.ceil() as usize);
    for e in stream.events() {
        let proposal = policy.propose(rng)?;
        if (e.action - proposal).abs() < cfg.delta() {
            policy.update(proposal, e.reward)?;
            trace.push(e.index, proposal, e.reward);
        }
    }
    Ok(trace)
}

/// `min(1, 2δ / (hi - lo))`. Exact only for proposals at least `δ` inside the
/// range; at an endpoint the acceptance window is cut in half.
pub fn acceptance_probability(delta: f64, range: ActionRange) -> f64 {
    (2.0 * delta / range.width()).min(1.0)
}

/// Log length needed for `t_prime` expected accepted events:
/// `ceil((hi - lo) T' / (2δ))`.
pub fn required_log_length(t_prime: u64, delta: f64, range: ActionRange) -> Result<u64> {
    if t_prime == 0 {
        return Err(Error::InvalidParameter { name: "t_prime", reason: "must be at least 1".into() });
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter { name: "delta", reason: format!("must be > 0, got {delta}") });
    }
    let l = range.width() * t_prime as f64 / (2.0 * delta);
    // Guard against 2500.0000000000005-style rounding before the ceiling.
    let rounded = l.round();
    Ok(if (l - rounded).abs() <= 1e-9 * rounded.max(1.0) { rounded } else { l.ceil() } as u64)
}

/// Formats `v` with 17 significant digits, positional where reasonable.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-5..17).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{exp}");
    }
    let decimals = (16 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes `index,action,reward` CSV with 17 significant digits per value.
pub fn save_stream(stream: &LoggedStream, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,action,reward")?;
    for e in stream.events() {
        writeln!(w, "{},{},{}", e.index, format_f64(e.action), format_f64(e.reward))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a stream written by [`save_stream`] (or any CSV with the same header)
/// and attaches `range`. Out-of-range actions are kept with a warning.
pub fn load_stream(path: impl AsRef<Path>, range: ActionRange) -> Result<LoggedStream> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let parse_err = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line, message };

    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "action", "reward"] {
        return Err(parse_err(1, format!("expected header `index,action,reward`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }

    let mut events = Vec::new();
    let mut out_of_range = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<&str> {
            rec.get(i).ok_or_else(|| parse_err(line, format!("missing `{name}` field")))
        };
        let index: u64 = field(0, "index")?
            .parse()
            .map_err(|e| parse_err(line, format!("bad index: {e}")))?;
        let action: f64 = field(1, "action")?
            .parse()
            .map_err(|e| parse_err(line, format!("bad action: {e}")))?;
        let reward: f64 = field(2, "reward")?
            .parse()
            .map_err(|e| parse_err(line, format!("bad reward: {e}")))?;
        if !action.is_finite() || !reward.is_finite() {
            return Err(parse_err(line, "non-finite value".into()));
        }
        if let Some(prev) = events.last().map(|e: &LoggedEvent| e.index) {
            if index <= prev {
                return Err(parse_err(line, format!("index {index} does not increase (previous {prev})")));
            }
        }
        if !range.contains(action) {
            out_of_range += 1;
        }
        events.push(LoggedEvent { index, action, reward });
    }
    if out_of_range > 0 {
        log::warn!(
            "{}: {out_of_range} action(s) outside [{}, {}] kept as-is",
            path.display(),
            range.lo(),
            range.hi()
        );
    }
    LoggedStream::new(events, range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{FixedAction, PolicySpec};
    use crate::reward_models::ParabolaModel;
    use crate::rng::SimRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn stream(events: &[(f64, f64)]) -> LoggedStream {
        let ev = events
            .iter()
            .enumerate()
            .map(|(i, &(action, reward))| LoggedEvent { index: i as u64, action, reward })
            .collect();
        LoggedStream::new(ev, ActionRange::unit()).unwrap()
    }

    #[test]
    fn single_event_acceptance() {
        let s = stream(&[(0.45, 1.0)]);
        let mut rng = SimRng::seed_from_u64(0);
        let mut p = FixedAction::new(0.5);
        let t = replay_cab(&mut p, &s, &ReplayConfig::unchecked(0.1), &mut rng).unwrap();
        assert_eq!(t.accepted(), 1);
        assert_eq!(t.cumulative_reward(), 1.0);
        assert_eq!(t.records()[0].action, 0.5);

        let mut p = FixedAction::new(0.5);
        let t = replay_cab(&mut p, &s, &ReplayConfig::unchecked(0.01), &mut rng).unwrap();
        assert_eq!(t.accepted(), 0);
        assert_eq!(t.cumulative_reward(), 0.0);
        assert_eq!(p.steps(), 0);
    }

    #[test]
    fn acceptance_is_strict() {
        let s = stream(&[(0.75, 1.0)]);
        let mut rng = SimRng::seed_from_u64(0);
        let mut p = FixedAction::new(0.5);
        let t = replay_cab(&mut p, &s, &ReplayConfig::unchecked(0.25), &mut rng).unwrap();
        assert_eq!(t.accepted(), 0);
    }

    #[test]
    fn discrete_replay_examples() {
        let s = stream(&[(1.0, 1.0), (2.0, 0.0), (1.0, 1.0)]);
        let mut rng = SimRng::seed_from_u64(0);
        let t = replay_discrete(&mut FixedAction::new(1.0), &s, &mut rng).unwrap();
        assert_eq!((t.accepted(), t.cumulative_reward()), (2, 2.0));
        let t = replay_discrete(&mut FixedAction::new(3.0), &s, &mut rng).unwrap();
        assert_eq!((t.accepted(), t.cumulative_reward()), (0, 0.0));
    }

    #[test]
    fn generated_stream_shape() {
        let model: RewardModel = ParabolaModel::new(0.5, 1.0, 0.0, ActionRange::unit()).unwrap().into();
        let mut rng = SimRng::seed_from_u64(7);
        let s = generate_logged_stream(&model, 10_000, &mut rng).unwrap();
        assert_eq!(s.len(), 10_000);
        assert!(s.events().iter().all(|e| ActionRange::unit().contains(e.action)));
        assert!(s.events().iter().all(|e| e.reward == model.mean_reward(e.action)));
        let mean = s.events().iter().map(|e| e.action).sum::<f64>() / 10_000.0;
        assert!((0.485..=0.515).contains(&mean), "{mean}");
        assert!(generate_logged_stream(&model, 0, &mut rng).is_err());
        assert_eq!(generate_logged_stream(&model, 2448, &mut rng).unwrap().len(), 2448);
    }

    #[test]
    fn sizing_formulas() {
        let r = ActionRange::unit();
        assert_eq!(acceptance_probability(0.1, r), 0.2);
        assert_eq!(acceptance_probability(0.5, r), 1.0);
        assert_eq!(acceptance_probability(0.7, r), 1.0);
        assert_eq!(required_log_length(500, 0.1, r).unwrap(), 2500);
        assert!((acceptance_probability(0.1, r) * 2448.0 - 489.6).abs() < 1e-9);
        assert_eq!(required_log_length(2000, 0.1, r).unwrap(), 10_000);
        assert_eq!(required_log_length(1, 0.1, ActionRange::new(0.0, 10.0).unwrap()).unwrap(), 50);
        assert!(required_log_length(0, 0.1, r).is_err());
        assert!(required_log_length(10, 0.0, r).is_err());
    }

    #[test]
    fn boundary_proposal_halves_acceptance() {
        let model: RewardModel = ParabolaModel::new(0.5, 1.0, 0.0, ActionRange::unit()).unwrap().into();
        let mut rng = SimRng::seed_from_u64(31);
        let s = generate_logged_stream(&model, 100_000, &mut rng).unwrap();
        let t = replay_cab(&mut FixedAction::new(0.0), &s, &ReplayConfig::unchecked(0.1), &mut rng).unwrap();
        let rate = t.accepted() as f64 / 100_000.0;
        // Binomial(1e5, 0.1): sd ~ 0.00095.
        assert!((rate - 0.1).abs() < 0.005, "{rate}");
    }

    #[test]
    fn config_validation() {
        let r = ActionRange::unit();
        assert!(ReplayConfig::new(0.1, r).is_ok());
        assert!(ReplayConfig::new(0.0, r).is_err());
        assert!(ReplayConfig::new(-0.1, r).is_err());
        assert!(ReplayConfig::new(1.0, r).is_err());
        assert!(ReplayConfig::new(0.1, r).unwrap().update_with_proposal());
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_f64(0.3), "0.29999999999999999");
        assert_eq!(format_f64(-0.04), "-0.040000000000000001");
        assert_eq!(format_f64(1.0), "1");
        assert_eq!(format_f64(0.0), "0");
        assert_eq!(format_f64(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_f64(12345.5), "12345.5");
        for v in [0.1, 1.0 / 3.0, -2.5e-6, 7.0e20, f64::MIN_POSITIVE, 123456789.123456789] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "index,action,reward\n").unwrap();
        assert!(matches!(load_stream(&p, ActionRange::unit()), Err(Error::EmptyStream)));

        std::fs::write(&p, "index,action,reward\n0,0.5,1.0\n1,0.2,abc\n").unwrap();
        match load_stream(&p, ActionRange::unit()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("reward"), "{message}");
            }
            other => panic!("{other:?}"),
        }

        std::fs::write(&p, "index,action,reward\n3,0.5,1.0\n2,0.2,0.1\n").unwrap();
        assert!(matches!(load_stream(&p, ActionRange::unit()), Err(Error::Parse { line: 3, .. })));

        std::fs::write(&p, "a,b,c\n0,0.5,1.0\n").unwrap();
        assert!(matches!(load_stream(&p, ActionRange::unit()), Err(Error::Parse { line: 1, .. })));

        std::fs::write(&p, "index,action,reward\n0,1.7,1.0\n").unwrap();
        let s = load_stream(&p, ActionRange::unit()).unwrap();
        assert_eq!(s.events()[0].action, 1.7);
    }

    #[test]
    fn accept_everything_when_delta_covers_range() {
        let model: RewardModel = ParabolaModel::new(0.3, 1.0, 0.01, ActionRange::unit()).unwrap().into();
        let mut rng = SimRng::seed_from_u64(1);
        let s = generate_logged_stream(&model, 500, &mut rng).unwrap();
        for spec in [PolicySpec::uniform(), PolicySpec::thompson(), PolicySpec::lock_in()] {
            let mut p = spec.build(ActionRange::unit(), &mut rng).unwrap();
            // LiF may leave the range slightly; UR and TBL never do.
            let t = replay_cab(&mut p, &s, &ReplayConfig::unchecked(1.0 + 1e-9), &mut rng).unwrap();
            if spec.label() != "LiF" {
                assert_eq!(t.accepted(), 500);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn save_load_round_trip(seed in any::<u64>(), len in 1usize..200) {
            let mut rng = SimRng::seed_from_u64(seed);
            let model: RewardModel = crate::reward_models::make_bimodal(&mut rng, ActionRange::unit(), 0.01).unwrap().into();
            let s = generate_logged_stream(&model, len, &mut rng).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.csv");
            save_stream(&s, &p).unwrap();
            prop_assert_eq!(load_stream(&p, ActionRange::unit()).unwrap(), s);
        }

        #[test]
        fn trace_is_consistent(seed in any::<u64>(), delta in 0.01f64..0.5) {
            let mut rng = SimRng::seed_from_u64(seed);
            let model: RewardModel = crate::reward_models::make_parabola(&mut rng, ActionRange::unit(), 0.01).unwrap().into();
            let s = generate_logged_stream(&model, 300, &mut rng).unwrap();
            let mut p = PolicySpec::thompson().build(ActionRange::unit(), &mut rng).unwrap();
            let t = replay_cab(&mut p, &s, &ReplayConfig::unchecked(delta), &mut rng).unwrap();
            prop_assert_eq!(t.accepted() as u64, p.steps());
            let sum: f64 = t.records().iter().map(|r| r.reward).sum();
            prop_assert_eq!(sum, t.cumulative_reward());
            prop_assert!(t.records().windows(2).all(|w| w[0].stream_index < w[1].stream_index));
        }

        #[test]
        fn rejected_events_do_not_touch_the_policy(
            seed in any::<u64>(),
            base in prop::collection::vec((0.3f64..0.7, -1.0f64..1.0), 1..60),
            noise in prop::collection::vec(prop::collection::vec((0.85f64..1.0, -5.0f64..5.0), 0..4), 60),
        ) {
            // LiF stays within [0.45, 0.55]; with δ = 0.3 events in [0.3, 0.7]
            // are always accepted and events in [0.85, 1] always rejected.
            let spec = PolicySpec::LockIn { a0: Some(0.5), amplitude: 0.05, window: 5, gamma: 0.001, omega: 1.0 };
            let cfg = ReplayConfig::unchecked(0.3);
            let clean = stream(&base);
            let mut mixed = Vec::new();
            for (i, ev) in base.iter().enumerate() {
                mixed.extend(noise[i].iter().copied());
                mixed.push(*ev);
            }
            let mixed = stream(&mixed);
            let mut rng = SimRng::seed_from_u64(seed);
            let mut p1 = spec.build(ActionRange::unit(), &mut rng).unwrap();
            let mut p2 = spec.build(ActionRange::unit(), &mut rng).unwrap();
            let t1 = replay_cab(&mut p1, &clean, &cfg, &mut rng).unwrap();
            let t2 = replay_cab(&mut p2, &mixed, &cfg, &mut rng).unwrap();
            let pairs = |t: &Trace| t.records().iter().map(|r| (r.action, r.reward)).collect::<Vec<_>>();
            prop_assert_eq!(pairs(&t1), pairs(&t2));
        }
    }
}
