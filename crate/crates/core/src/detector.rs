//! Online decision engine: frame evidence, the floored cumulative statistic,
//! alarm raising and event segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{FeatureRow, FeatureVector};
use crate::model::{powi, DetectorModel};

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// What to do with a frame that has no detected objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyFramePolicy {
    /// Leave the statistic untouched; the frame cannot become an event start.
    #[default]
    Skip,
    /// Treat the frame as maximally nominal: `δ = −d_α^m`.
    Floor,
}

impl std::str::FromStr for EmptyFramePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(Self::Skip),
            "floor" => Ok(Self::Floor),
            other => Err(Error::Config(format!("unknown empty-frame policy {other:?}"))),
        }
    }
}

impl std::fmt::Display for EmptyFramePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Skip => "skip",
            Self::Floor => "floor",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub h: f64,
    pub n_end: u32,
    pub empty_frame_policy: EmptyFramePolicy,
}

impl DetectorConfig {
    pub fn new(h: f64, n_end: u32) -> Result<Self> {
        let cfg = Self { h, n_end, empty_frame_policy: EmptyFramePolicy::Skip };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_policy(mut self, policy: EmptyFramePolicy) -> Self {
        self.empty_frame_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || self.h.is_nan() {
            return Err(Error::Config(format!("threshold h must be positive, got {}", self.h)));
        }
        if self.n_end == 0 {
            return Err(Error::Config("n_end must be at least 1".into()));
        }
        Ok(())
    }
}

/// `δ_t = (max_i d_t^i)^m − d_α^m` over the objects of one frame.
pub fn anomaly_evidence<P: AsRef<[f64]>>(frame_objects: &[P], model: &DetectorModel) -> Result<f64> {
    if frame_objects.is_empty() {
        return Err(Error::Data("anomaly evidence needs at least one object".into()));
    }
    let mut max_d = f64::NEG_INFINITY;
    for obj in frame_objects {
        let values = obj.as_ref();
        if values.len() != model.m {
            return Err(Error::Data(format!(
                "dimension mismatch: object has {} values, model expects {}",
                values.len(),
                model.m
            )));
        }
        max_d = max_d.max(model.knn_distance(values)?);
    }
    Ok(evidence_from_distance(max_d, model.d_alpha, model.m))
}

/// Evidence for a known maximum kNN distance.
pub fn evidence_from_distance(max_distance: f64, d_alpha: f64, m: usize) -> f64 {
    powi(max_distance, m) - powi(d_alpha, m)
}

/// `max(s_prev + δ, 0)`.
pub fn update_statistic(s_prev: f64, delta: f64) -> Result<f64> {
    if !delta.is_finite() {
        return Err(Error::Data(format!("non-finite evidence {delta}")));
    }
    if !(s_prev >= 0.0) {
        return Err(Error::Data(format!("statistic must be non-negative, got {s_prev}")));
    }
    Ok((s_prev + delta).max(0.0))
}

/// The raw floored recursion with no alarms or resets.
pub fn cusum_trace(deltas: &[f64]) -> Result<Vec<f64>> {
    let mut s = 0.0;
    deltas
        .iter()
        .map(|&d| {
            s = update_statistic(s, d)?;
            Ok(s)
        })
        .collect()
}

/// A detected anomalous segment.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyEvent {
    pub tau_start: u64,
    pub tau_end: u64,
    pub peak_statistic: f64,
    pub truncated: bool,
    /// `(frame, δ)` for every processed frame in `[tau_start, tau_end]`.
    pub evidence_trace: Vec<(u64, f64)>,
}

/// One line of the JSON-lines detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tau_start: u64,
    pub tau_end: u64,
    pub peak_statistic: f64,
    pub truncated: bool,
}

impl From<&AnomalyEvent> for EventRecord {
    fn from(e: &AnomalyEvent) -> Self {
        Self { tau_start: e.tau_start, tau_end: e.tau_end, peak_statistic: e.peak_statistic, truncated: e.truncated }
    }
}

/// Per-frame trace row: `frame_id,delta,s,alarm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub frame_id: u64,
    /// `None` for a skipped empty frame.
    pub delta: Option<f64>,
    pub s: f64,
    pub alarm: bool,
}

/// Streaming state for one stream.
#[derive(Debug, Clone, Default)]
pub struct DetectorState {
    pub s: f64,
    pub last_zero_frame: Option<u64>,
    pub decrease_run: u32,
    pub peak_s: f64,
    pub peak_frame: u64,
    pub in_alarm: bool,
    tau_start: u64,
    first_frame: Option<u64>,
    last_frame: Option<u64>,
    /// evidence since the last zero of the statistic
    pending: Vec<(u64, f64)>,
}

impl DetectorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advances by one frame given its objects.
    pub fn step<P: AsRef<[f64]>>(
        &mut self,
        frame_id: u64,
        frame_objects: &[P],
        model: &DetectorModel,
        config: &DetectorConfig,
    ) -> Result<(TraceRow, Option<AnomalyEvent>)> {
        let delta = if frame_objects.is_empty() {
            match config.empty_frame_policy {
                EmptyFramePolicy::Skip => None,
                EmptyFramePolicy::Floor => Some(-model.d_alpha_pow()),
            }
        } else {
            Some(anomaly_evidence(frame_objects, model)?)
        };
        self.step_evidence(frame_id, delta, config)
    }

    /// Advances by one frame given its evidence (`None` = skipped frame).
    pub fn step_evidence(
        &mut self,
        frame_id: u64,
        delta: Option<f64>,
        config: &DetectorConfig,
    ) -> Result<(TraceRow, Option<AnomalyEvent>)> {
        if let Some(last) = self.last_frame {
            if frame_id <= last {
                return Err(Error::Data(format!("frame {frame_id} arrived after frame {last}")));
            }
        }
        self.first_frame.get_or_insert(frame_id);
        self.last_frame = Some(frame_id);

        let Some(delta) = delta else {
            return Ok((TraceRow { frame_id, delta: None, s: self.s, alarm: self.in_alarm }, None));
        };
        let prev = self.s;
        let s = update_statistic(prev, delta)?;
        self.s = s;
        let mut event = None;

        if !self.in_alarm {
            if s == 0.0 {
                self.last_zero_frame = Some(frame_id);
                self.pending.clear();
            }
            self.pending.push((frame_id, delta));
            if s >= config.h {
                self.in_alarm = true;
                self.tau_start = self.last_zero_frame.or(self.first_frame).unwrap_or(frame_id);
                self.peak_s = s;
                self.peak_frame = frame_id;
                self.decrease_run = 0;
            }
        } else {
            self.pending.push((frame_id, delta));
            if s > self.peak_s {
                self.peak_s = s;
                self.peak_frame = frame_id;
                self.decrease_run = 0;
            } else if s < prev {
                self.decrease_run += 1;
            } else {
                self.decrease_run = 0;
            }
            // Reaching the floor ends the decline as well: ties at zero would otherwise
            // hold the alarm open forever.
            if self.decrease_run >= config.n_end || s == 0.0 {
                event = Some(self.close_event(false));
                self.s = 0.0;
                self.last_zero_frame = Some(frame_id);
            }
        }
        let alarm = self.in_alarm || event.is_some();
        Ok((TraceRow { frame_id, delta: Some(delta), s: self.s, alarm }, event))
    }

    fn close_event(&mut self, truncated: bool) -> AnomalyEvent {
        let tau_end = if truncated { self.last_frame.unwrap_or(self.peak_frame) } else { self.peak_frame };
        let evidence_trace = std::mem::take(&mut self.pending)
            .into_iter()
            .filter(|&(f, _)| f >= self.tau_start && f <= tau_end)
            .collect();
        self.in_alarm = false;
        self.decrease_run = 0;
        AnomalyEvent {
            tau_start: self.tau_start,
            tau_end,
            peak_statistic: self.peak_s,
            truncated,
            evidence_trace,
        }
    }

    /// Closes the stream, emitting a truncated event if an alarm is still open.
    pub fn finish(&mut self) -> Option<AnomalyEvent> {
        if self.in_alarm {
            Some(self.close_event(true))
        } else {
            None
        }
    }
}

/// One frame of input: its id and detected objects (possibly none).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    pub objects: Vec<FeatureVector>,
}

/// Groups CSV rows into consecutive frames; missing ids inside the range become empty frames.
pub fn group_frames(rows: Vec<FeatureRow>) -> Result<Vec<Frame>> {
    let mut frames: Vec<Frame> = Vec::new();
    for row in rows {
        let id = match &row {
            FeatureRow::Object(v) => v.frame_id,
            FeatureRow::EmptyFrame(id) => *id,
        };
        match frames.last() {
            Some(last) if id < last.frame_id => {
                return Err(Error::Data(format!("unordered frames: frame {id} follows frame {}", last.frame_id)));
            }
            Some(last) if id > last.frame_id => {
                for gap in last.frame_id + 1..id {
                    frames.push(Frame { frame_id: gap, objects: Vec::new() });
                }
                frames.push(Frame { frame_id: id, objects: Vec::new() });
            }
            None => frames.push(Frame { frame_id: id, objects: Vec::new() }),
            _ => {}
        }
        if let FeatureRow::Object(v) = row {
            frames.last_mut().expect("pushed above").objects.push(v);
        }
    }
    Ok(frames)
}

/// Events plus the per-frame trace of a batch run.
#[derive(Debug, Clone, Default)]
pub struct OfflineRun {
    pub events: Vec<AnomalyEvent>,
    pub trace: Vec<TraceRow>,
}

/// Folds [`DetectorState::step`] over an ordered list of frames.
pub fn run_offline(frames: &[Frame], model: &DetectorModel, config: &DetectorConfig) -> Result<OfflineRun> {
    config.validate()?;
    let mut state = DetectorState::new();
    let mut out = OfflineRun::default();
    for frame in frames {
        let (row, event) = state.step(frame.frame_id, &frame.objects, model, config)?;
        out.trace.push(row);
        out.events.extend(event);
    }
    out.events.extend(state.finish());
    Ok(out)
}

/// Same as [`run_offline`] but driven by precomputed evidence values.
pub fn run_evidence(evidence: &[(u64, Option<f64>)], config: &DetectorConfig) -> Result<OfflineRun> {
    config.validate()?;
    let mut state = DetectorState::new();
    let mut out = OfflineRun::default();
    for &(frame_id, delta) in evidence {
        let (row, event) = state.step_evidence(frame_id, delta, config)?;
        out.trace.push(row);
        out.events.extend(event);
    }
    out.events.extend(state.finish());
    Ok(out)
}

/// Writes events as JSON lines.
pub fn write_events_jsonl<W: std::io::Write>(mut w: W, events: &[AnomalyEvent]) -> Result<()> {
    for e in events {
        let line = serde_json::to_string(&EventRecord::from(e)).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Writes the `frame_id,delta,s,alarm` trace.
pub fn write_trace_csv<W: std::io::Write>(w: W, trace: &[TraceRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["frame_id", "delta", "s", "alarm"]).map_err(crate::feature::csv_io)?;
    for r in trace {
        let delta = r.delta.map_or_else(String::new, |d| d.to_string());
        wr.write_record([r.frame_id.to_string(), delta, r.s.to_string(), u8::from(r.alarm).to_string()])
            .map_err(crate::feature::csv_io)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DetectorModel, PhiConvention};
    use proptest::prelude::*;

    fn line_model(d_alpha: f64, m: usize) -> DetectorModel {
        // reference point at the origin only, so the kNN distance is the norm
        DetectorModel::from_parts(vec![vec![0.0; m]], 1, 0.05, d_alpha, 1.0, 10, 0, PhiConvention::PowerMinus)
            .unwrap()
    }

    fn on_axis(d: f64, m: usize) -> FeatureVector {
        let mut v = vec![0.0; m];
        v[0] = d;
        FeatureVector::new(0, 0, v)
    }

    #[test]
    fn evidence_examples() {
        let model = line_model(1.0, 3);
        assert_eq!(anomaly_evidence(&[on_axis(1.0, 3)], &model).unwrap(), 0.0);
        assert_eq!(anomaly_evidence(&[on_axis(2.0, 3)], &model).unwrap(), 7.0);
        let model = line_model(1.0, 2);
        assert_eq!(anomaly_evidence(&[on_axis(0.5, 2), on_axis(2.0, 2)], &model).unwrap(), 3.0);
        assert!(matches!(anomaly_evidence(&[on_axis(1.0, 3)], &model), Err(Error::Data(_))));
        let none: [FeatureVector; 0] = [];
        assert!(anomaly_evidence(&none, &model).is_err());
    }

    #[test]
    fn statistic_update_examples() {
        assert_eq!(update_statistic(0.0, -0.5).unwrap(), 0.0);
        assert!((update_statistic(1.2, 0.3).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(update_statistic(0.2, -0.2).unwrap(), 0.0);
        assert!(update_statistic(0.0, f64::NAN).is_err());
        assert!(update_statistic(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn nominal_stream_never_alarms() {
        let cfg = DetectorConfig::new(1.0, 5).unwrap();
        let ev: Vec<(u64, Option<f64>)> = (0..100).map(|t| (t, Some(-0.3))).collect();
        let run = run_evidence(&ev, &cfg).unwrap();
        assert!(run.events.is_empty());
        assert!(run.trace.iter().all(|r| r.s == 0.0 && !r.alarm));
    }

    #[test]
    fn hand_simulated_segmentation() {
        // frames 1..=9; s: 0,3,6*,9,8,7,6 -> event [1,4], reset at frame 7
        let deltas = [-1.0, 3.0, 3.0, 3.0, -1.0, -1.0, -1.0, -1.0, -1.0];
        let ev: Vec<(u64, Option<f64>)> = deltas.iter().enumerate().map(|(i, &d)| (i as u64 + 1, Some(d))).collect();
        let cfg = DetectorConfig::new(5.0, 3).unwrap();
        let run = run_evidence(&ev, &cfg).unwrap();
        let s: Vec<f64> = run.trace.iter().map(|r| r.s).collect();
        assert_eq!(s, vec![0.0, 3.0, 6.0, 9.0, 8.0, 7.0, 0.0, 0.0, 0.0]);
        assert!(!run.trace[1].alarm && run.trace[2].alarm && run.trace[6].alarm && !run.trace[7].alarm);
        assert_eq!(run.events.len(), 1);
        let e = &run.events[0];
        assert_eq!((e.tau_start, e.tau_end), (1, 4));
        assert_eq!(e.peak_statistic, 9.0);
        assert!(!e.truncated);
        assert_eq!(e.evidence_trace, vec![(1, -1.0), (2, 3.0), (3, 3.0), (4, 3.0)]);
    }

    #[test]
    fn unreachable_threshold_never_alarms() {
        let deltas = [0.5, 2.0, -1.0, 3.0, 0.1];
        let total: f64 = deltas.iter().filter(|d| **d > 0.0).sum();
        let ev: Vec<(u64, Option<f64>)> = deltas.iter().enumerate().map(|(i, &d)| (i as u64, Some(d))).collect();
        let run = run_evidence(&ev, &DetectorConfig::new(total + 1.0, 5).unwrap()).unwrap();
        assert!(run.events.is_empty());
    }

    #[test]
    fn ties_break_the_decrease_run() {
        // peak 6 at frame 2, then 5, 5 (tie), 4, 3 -> needs a fresh run of 3
        let deltas = [3.0, 3.0, -1.0, 0.0, -1.0, -1.0, -1.0];
        let ev: Vec<(u64, Option<f64>)> = deltas.iter().enumerate().map(|(i, &d)| (i as u64, Some(d))).collect();
        let run = run_evidence(&ev, &DetectorConfig::new(5.0, 3).unwrap()).unwrap();
        assert_eq!(run.events.len(), 1);
        assert_eq!(run.events[0].tau_end, 1);
        // emitted on the third strictly decreasing frame after the tie
        assert!(run.trace[5].alarm && run.trace[6].s == 0.0);
        assert_eq!(run.trace[5].s, 3.0);
    }

    #[test]
    fn reaching_zero_closes_the_event() {
        let deltas = [6.0, -10.0, -1.0];
        let ev: Vec<(u64, Option<f64>)> = deltas.iter().enumerate().map(|(i, &d)| (i as u64, Some(d))).collect();
        let run = run_evidence(&ev, &DetectorConfig::new(5.0, 5).unwrap()).unwrap();
        assert_eq!(run.events.len(), 1);
        assert_eq!((run.events[0].tau_start, run.events[0].tau_end), (0, 0));
    }

    #[test]
    fn truncated_event_at_end_of_stream() {
        let deltas = [-1.0, 4.0, 4.0, 1.0];
        let ev: Vec<(u64, Option<f64>)> = deltas.iter().enumerate().map(|(i, &d)| (i as u64 + 10, Some(d))).collect();
        let run = run_evidence(&ev, &DetectorConfig::new(5.0, 5).unwrap()).unwrap();
        assert_eq!(run.events.len(), 1);
        let e = &run.events[0];
        assert!(e.truncated);
        assert_eq!((e.tau_start, e.tau_end), (10, 13));
    }

    #[test]
    fn empty_frame_policies() {
        let model = line_model(1.0, 2);
        let frames = vec![
            Frame { frame_id: 0, objects: vec![on_axis(2.0, 2)] },
            Frame { frame_id: 1, objects: vec![] },
            Frame { frame_id: 2, objects: vec![on_axis(2.0, 2)] },
        ];
        let cfg = DetectorConfig::new(100.0, 5).unwrap();
        let skip = run_offline(&frames, &model, &cfg).unwrap();
        assert_eq!(skip.trace[1].delta, None);
        assert_eq!(skip.trace[1].s, 3.0);
        assert_eq!(skip.trace[2].s, 6.0);
        let floor = run_offline(&frames, &model, &cfg.with_policy(EmptyFramePolicy::Floor)).unwrap();
        assert_eq!(floor.trace[1].delta, Some(-1.0));
        assert_eq!(floor.trace[2].s, 5.0);
    }

    #[test]
    fn skipped_frames_are_not_event_starts() {
        let cfg = DetectorConfig::new(5.0, 2).unwrap();
        let ev = vec![(0, Some(-1.0)), (1, None), (2, Some(3.0)), (3, Some(3.0)), (4, Some(-1.0)), (5, Some(-1.0))];
        let run = run_evidence(&ev, &cfg).unwrap();
        assert_eq!(run.events[0].tau_start, 0);
    }

    #[test]
    fn grouping_and_ordering() {
        assert!(run_offline(&[], &line_model(1.0, 2), &DetectorConfig::new(1.0, 5).unwrap()).unwrap().events.is_empty());
        let rows = vec![
            FeatureRow::Object(FeatureVector::new(2, 0, vec![1.0])),
            FeatureRow::Object(FeatureVector::new(2, 1, vec![2.0])),
            FeatureRow::Object(FeatureVector::new(5, 0, vec![3.0])),
            FeatureRow::EmptyFrame(6),
        ];
        let frames = group_frames(rows).unwrap();
        let ids: Vec<u64> = frames.iter().map(|f| f.frame_id).collect();
        assert_eq!(ids, vec![2, 3, 4, 5, 6]);
        assert_eq!(frames[0].objects.len(), 2);
        assert!(frames[1].objects.is_empty() && frames[4].objects.is_empty());

        let bad = vec![FeatureRow::EmptyFrame(3), FeatureRow::EmptyFrame(1)];
        assert!(matches!(group_frames(bad), Err(Error::Data(_))));
        let unordered = vec![
            Frame { frame_id: 3, objects: vec![on_axis(1.0, 2)] },
            Frame { frame_id: 3, objects: vec![on_axis(1.0, 2)] },
        ];
        assert!(run_offline(&unordered, &line_model(1.0, 2), &DetectorConfig::new(1.0, 5).unwrap()).is_err());
    }

    #[test]
    fn report_formats() {
        let e = AnomalyEvent { tau_start: 1, tau_end: 4, peak_statistic: 9.5, truncated: false, evidence_trace: vec![] };
        let mut buf = Vec::new();
        write_events_jsonl(&mut buf, &[e]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"tau_start\":1,\"tau_end\":4,\"peak_statistic\":9.5,\"truncated\":false}\n"
        );
        let mut buf = Vec::new();
        let rows = [
            TraceRow { frame_id: 0, delta: Some(-0.5), s: 0.0, alarm: false },
            TraceRow { frame_id: 1, delta: None, s: 0.0, alarm: false },
        ];
        write_trace_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame_id,delta,s,alarm\n0,-0.5,0,0\n1,,0,0\n");
    }

    fn evidence_stream() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(prop_oneof![3 => -2.0f64..0.5, 1 => 0.0f64..4.0], 0..300)
    }

    proptest! {
        #[test]
        fn statistic_is_never_negative(deltas in evidence_stream(), h in 0.1f64..20.0, n_end in 1u32..8) {
            let ev: Vec<(u64, Option<f64>)> = deltas.iter().enumerate().map(|(i, &d)| (i as u64, Some(d))).collect();
            let run = run_evidence(&ev, &DetectorConfig::new(h, n_end).unwrap()).unwrap();
            prop_assert!(run.trace.iter().all(|r| r.s >= 0.0));
            for e in &run.events {
                prop_assert!(e.tau_start <= e.tau_end);
                prop_assert!(e.peak_statistic >= h);
            }
        }

        #[test]
        fn lower_threshold_never_removes_crossings(deltas in evidence_stream(), h in 0.1f64..20.0, f in 0.1f64..1.0) {
            let trace = cusum_trace(&deltas).unwrap();
            let high: Vec<usize> = (0..trace.len()).filter(|&i| trace[i] >= h).collect();
            let low: Vec<usize> = (0..trace.len()).filter(|&i| trace[i] >= h * f).collect();
            prop_assert!(high.iter().all(|i| low.contains(i)));
        }

        #[test]
        fn renewal_after_each_event(deltas in evidence_stream(), h in 0.5f64..10.0) {
            let ev: Vec<(u64, Option<f64>)> = deltas.iter().enumerate().map(|(i, &d)| (i as u64, Some(d))).collect();
            let cfg = DetectorConfig::new(h, 3).unwrap();
            let run = run_evidence(&ev, &cfg).unwrap();
            // find reset frames: alarm frames whose statistic was forced to zero
            let mut starts = vec![0usize];
            for (i, r) in run.trace.iter().enumerate() {
                if r.alarm && r.s == 0.0 && i + 1 < run.trace.len() {
                    starts.push(i + 1);
                }
            }
            for w in starts.windows(2).chain(std::iter::once(&[*starts.last().unwrap(), run.trace.len()][..])) {
                let (a, b) = (w[0], w[1]);
                let fresh = run_evidence(&ev[a..b], &cfg).unwrap();
                let got: Vec<f64> = run.trace[a..b].iter().map(|r| r.s).collect();
                let want: Vec<f64> = fresh.trace.iter().map(|r| r.s).collect();
                prop_assert_eq!(got, want);
            }
        }

        #[test]
        fn offline_equals_step_folding(deltas in evidence_stream(), h in 0.5f64..10.0) {
            let ev: Vec<(u64, Option<f64>)> = deltas.iter().enumerate().map(|(i, &d)| (i as u64, Some(d))).collect();
            let cfg = DetectorConfig::new(h, 4).unwrap();
            let run = run_evidence(&ev, &cfg).unwrap();
            let mut state = DetectorState::new();
            let mut events = Vec::new();
            let mut trace = Vec::new();
            for &(f, d) in &ev {
                let (row, e) = state.step_evidence(f, d, &cfg).unwrap();
                trace.push(row);
                events.extend(e);
            }
            events.extend(state.finish());
            prop_assert_eq!(run.trace, trace);
            prop_assert_eq!(run.events, events);
        }
    }
}
