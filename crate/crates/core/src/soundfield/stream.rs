use std::sync::Arc;

use super::{BinauralEngine, RenderParams, Result};
use crate::scene::{HrirSet, ListenerPose, SourcePoint, Trajectory};

/// Incremental renderer producing consecutive output blocks.
///
/// Uses the same frame grid, padding and per-frame filtering as
/// [`render_binaural`](super::render_binaural); each block holds the listener
/// pose fixed for every frame that starts inside it. Rendering the whole
/// signal with one pose reproduces the offline result.
#[derive(Debug, Clone)]
pub struct StreamRenderer {
    signal: Arc<[f64]>,
    source: Arc<Trajectory<SourcePoint>>,
    engine: BinauralEngine,
    lead: usize,
    next_frame: usize,
    /// Padded-signal index of `acc_left[0]`.
    acc_start: usize,
    acc_left: Vec<f64>,
    acc_right: Vec<f64>,
    norm: Vec<f64>,
    emitted: usize,
}

impl StreamRenderer {
    pub fn new(
        signal: Arc<[f64]>,
        sample_rate: u32,
        source: Arc<Trajectory<SourcePoint>>,
        hrirs: Arc<HrirSet>,
        params: RenderParams,
    ) -> Result<Self> {
        let engine = BinauralEngine::new(hrirs, params, sample_rate)?;
        let norm = (0..params.hop)
            .map(|r| engine.plan().full_window_sum(r))
            .collect();
        Ok(Self {
            signal,
            source,
            engine,
            lead: params.lead_in(),
            next_frame: 0,
            acc_start: 0,
            acc_left: Vec::new(),
            acc_right: Vec::new(),
            norm,
            emitted: 0,
        })
    }

    pub fn params(&self) -> &RenderParams {
        self.engine.params()
    }

    /// Samples already produced.
    pub fn position(&self) -> usize {
        self.emitted
    }

    pub fn remaining(&self) -> usize {
        self.signal.len() - self.emitted
    }

    fn padded(&self, idx: usize) -> f64 {
        idx.checked_sub(self.lead)
            .and_then(|i| self.signal.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    /// Renders up to `n` further samples per ear with `listener` held fixed.
    /// Returns fewer samples (possibly none) near the end of the signal.
    pub fn render(&mut self, n: usize, listener: &ListenerPose) -> (Vec<f64>, Vec<f64>) {
        let n = n.min(self.remaining());
        let begin = self.lead + self.emitted;
        let end = begin + n;
        let plan = self.engine.plan().clone();
        let (hop, window_len, fft_len) = (plan.hop(), plan.window_len(), plan.fft_len());

        let mut frame = vec![0.0; window_len];
        while self.next_frame * hop < end {
            let k = self.next_frame;
            let start = k * hop;
            for (j, v) in frame.iter_mut().enumerate() {
                *v = self.padded(start + j);
            }
            let t = self.engine.frame_time(k);
            let pose = self.engine.frame_pose(listener, &self.source.pose_at(t));
            let spectrum = plan.analyze(&frame);
            let (mut l, mut r) = self.engine.apply(&spectrum, &pose);
            let tl = plan.synthesize(&mut l);
            let tr = plan.synthesize(&mut r);

            let off = start - self.acc_start;
            if self.acc_left.len() < off + fft_len {
                self.acc_left.resize(off + fft_len, 0.0);
                self.acc_right.resize(off + fft_len, 0.0);
            }
            for (a, v) in self.acc_left[off..].iter_mut().zip(&tl) {
                *a += v;
            }
            for (a, v) in self.acc_right[off..].iter_mut().zip(&tr) {
                *a += v;
            }
            self.next_frame += 1;
        }

        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for pos in begin..end {
            let i = pos - self.acc_start;
            let w = self.norm[pos % hop];
            left.push(self.acc_left.get(i).copied().unwrap_or(0.0) / w);
            right.push(self.acc_right.get(i).copied().unwrap_or(0.0) / w);
        }
        let consumed = (end - self.acc_start).min(self.acc_left.len());
        self.acc_left.drain(..consumed);
        self.acc_right.drain(..consumed);
        self.acc_start = end;
        self.emitted += n;
        (left, right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AudioClip, HrirPair};
    use crate::soundfield::render_binaural;

    fn hrirs() -> HrirSet {
        let ir = |a: f64| (0..48).map(|i| (a * i as f64).sin() * 0.9f64.powi(i)).collect();
        HrirSet::new(
            16_000,
            vec![
                (0.0, HrirPair { left: ir(0.3), right: ir(0.5) }),
                (90.0, HrirPair { left: ir(0.1), right: ir(0.9) }),
                (200.0, HrirPair { left: ir(0.7), right: ir(0.2) }),
            ],
        )
        .unwrap()
    }

    #[test]
    fn blocks_concatenate_to_offline_render() {
        let x: Vec<f64> = (0..9000).map(|n| ((n * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
        let source = Trajectory::new(vec![
            (0.0, SourcePoint::new(-2.0, 1.0)),
            (0.5, SourcePoint::new(2.0, 1.0)),
        ])
        .unwrap();
        let listener = ListenerPose::new(0.4, -0.3, 0.6);
        let params = RenderParams::default();
        let offline = render_binaural(
            &AudioClip::mono(16_000, x.clone()),
            &source,
            &Trajectory::constant(listener),
            &hrirs(),
            &params,
        )
        .unwrap();

        let mut r = StreamRenderer::new(
            x.into(),
            16_000,
            Arc::new(source),
            Arc::new(hrirs()),
            params,
        )
        .unwrap();
        let (mut l, mut rr) = (Vec::new(), Vec::new());
        for n in [256, 1024, 512, 4096, 4096] {
            let (a, b) = r.render(n, &listener);
            l.extend(a);
            rr.extend(b);
        }
        assert_eq!(r.remaining(), 0);
        assert_eq!(l.len(), 9000);
        for (got, want) in [(&l, &offline.channels[0]), (&rr, &offline.channels[1])] {
            let err = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err}");
        }
        assert!(r.render(10, &listener).0.is_empty());
    }
}
