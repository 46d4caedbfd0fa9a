use std::sync::Arc;

use num_complex::Complex64;

use super::{hrtf_for_azimuth, FramePose, Result, SoundfieldError, DEFAULT_GAIN_CAP};
use crate::scene::{AudioClip, HrirSet, ListenerPose, SourcePoint, Trajectory};
use crate::stft::{istft_with_plan, stft_with_plan, Spectrogram, StftPlan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    pub window_len: usize,
    pub hop: usize,
    /// `None` picks the next power of two that holds a full linear
    /// convolution of one frame with the HRIR.
    pub fft_len: Option<usize>,
    pub gain_cap: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            window_len: 1024,
            hop: 256,
            fft_len: None,
            gain_cap: DEFAULT_GAIN_CAP,
        }
    }
}

impl RenderParams {
    pub fn resolve_fft_len(&self, hrir_len: usize) -> Result<usize> {
        let min = self.window_len + hrir_len.max(1) - 1;
        match self.fft_len {
            Some(n) if n < min => Err(SoundfieldError::InvalidParams(format!(
                "fft_len {n} < window_len + hrir_len - 1 = {min}; frames would wrap"
            ))),
            Some(n) => Ok(n),
            None => Ok(min.next_power_of_two()),
        }
    }

    /// Zeros prepended to the signal so every real sample is covered by a
    /// full set of overlapping frames.
    pub fn lead_in(&self) -> usize {
        self.window_len - self.hop
    }
}

/// Per-frame binaural filtering shared by the offline and streaming
/// renderers.
#[derive(Debug, Clone)]
pub struct BinauralEngine {
    plan: StftPlan,
    hrirs: Arc<HrirSet>,
    params: RenderParams,
    sample_rate: u32,
    cached: Option<(u64, Vec<Complex64>, Vec<Complex64>)>,
}

impl BinauralEngine {
    pub fn new(hrirs: Arc<HrirSet>, params: RenderParams, sample_rate: u32) -> Result<Self> {
        if hrirs.sample_rate() != sample_rate {
            return Err(SoundfieldError::SampleRateMismatch {
                hrir: hrirs.sample_rate(),
                audio: sample_rate,
            });
        }
        if params.gain_cap.is_nan() || params.gain_cap < 0.0 {
            return Err(SoundfieldError::InvalidParams(format!(
                "gain_cap must be non-negative, got {}",
                params.gain_cap
            )));
        }
        let fft_len = params.resolve_fft_len(hrirs.hrir_len())?;
        let plan = StftPlan::new(params.window_len, params.hop, fft_len)?;
        Ok(Self {
            plan,
            hrirs,
            params,
            sample_rate,
            cached: None,
        })
    }

    pub fn plan(&self) -> &StftPlan {
        &self.plan
    }

    pub fn params(&self) -> &RenderParams {
        &self.params
    }

    /// Time of the center of frame `k`, in seconds of the unpadded signal.
    pub fn frame_time(&self, k: usize) -> f64 {
        let center = (k * self.params.hop + self.params.window_len / 2) as f64
            - self.params.lead_in() as f64;
        center / self.sample_rate as f64
    }

    pub fn frame_pose(&self, listener: &ListenerPose, source: &SourcePoint) -> FramePose {
        FramePose::compute(listener, source, self.params.gain_cap)
    }

    fn filters(&mut self, azimuth: f64) -> (&[Complex64], &[Complex64]) {
        let key = azimuth.to_bits();
        if self.cached.as_ref().map(|c| c.0) != Some(key) {
            let pair = hrtf_for_azimuth(&self.hrirs, azimuth);
            let left = self.plan.spectrum_of(&pair.left);
            let right = self.plan.spectrum_of(&pair.right);
            self.cached = Some((key, left, right));
        }
        let (_, l, r) = self.cached.as_ref().expect("filled above");
        (l, r)
    }

    /// `lambda * F(az, f) * A(f)` for both ears.
    pub fn apply(
        &mut self,
        spectrum: &[Complex64],
        pose: &FramePose,
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let lambda = pose.lambda;
        let (fl, fr) = self.filters(pose.grid_azimuth());
        let left = spectrum.iter().zip(fl).map(|(a, h)| h * a * lambda).collect();
        let right = spectrum.iter().zip(fr).map(|(a, h)| h * a * lambda).collect();
        (left, right)
    }
}

/// Renders the stereo signal heard along `listener`, given the mono
/// `recording` made at the origin while the source moved along `source`.
///
/// Output has the same length and rate as the recording.
pub fn render_binaural(
    recording: &AudioClip,
    source: &Trajectory<SourcePoint>,
    listener: &Trajectory<ListenerPose>,
    hrirs: &HrirSet,
    params: &RenderParams,
) -> Result<AudioClip> {
    if recording.num_channels() != 1 {
        return Err(SoundfieldError::NotMono(recording.num_channels()));
    }
    let mut engine = BinauralEngine::new(
        Arc::new(hrirs.clone()),
        *params,
        recording.sample_rate,
    )?;
    let lead = params.lead_in();
    let len = recording.len();

    let mut padded = vec![0.0; lead + len + params.window_len];
    padded[lead..lead + len].copy_from_slice(&recording.channels[0]);
    let spec = stft_with_plan(engine.plan(), &padded, recording.sample_rate);

    let mut left = Vec::with_capacity(spec.num_frames());
    let mut right = Vec::with_capacity(spec.num_frames());
    for (k, frame) in spec.frames.iter().enumerate() {
        let t = engine.frame_time(k);
        let pose = engine.frame_pose(&listener.pose_at(t), &source.pose_at(t));
        let (l, r) = engine.apply(frame, &pose);
        left.push(l);
        right.push(r);
    }

    let plan = engine.plan().clone();
    let channel = |frames: Vec<Vec<Complex64>>| -> Result<Vec<f64>> {
        let s = Spectrogram {
            frames,
            window_len: spec.window_len,
            hop: spec.hop,
            fft_len: spec.fft_len,
            sample_rate: spec.sample_rate,
            signal_len: spec.signal_len,
        };
        let mut out = istft_with_plan(&plan, &s)?.channels.remove(0);
        out.drain(..lead);
        out.truncate(len);
        Ok(out)
    };
    let left = channel(left)?;
    let right = channel(right)?;
    Ok(AudioClip::stereo(recording.sample_rate, left, right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::HrirPair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn impulse(len: usize, at: usize, gain: f64) -> Vec<f64> {
        let mut v = vec![0.0; len];
        v[at] = gain;
        v
    }

    fn set(left: Vec<f64>, right: Vec<f64>) -> HrirSet {
        let p = HrirPair { left, right };
        HrirSet::new(48_000, vec![(0.0, p.clone()), (180.0, p)]).unwrap()
    }

    fn noise(n: usize, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioClip::mono(48_000, (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect())
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (num / b.iter().map(|y| y * y).sum::<f64>()).sqrt()
    }

    fn fixed(x: f64, y: f64) -> Trajectory<SourcePoint> {
        Trajectory::constant(SourcePoint::new(x, y))
    }

    fn at(x: f64, y: f64) -> Trajectory<ListenerPose> {
        Trajectory::constant(ListenerPose::new(x, y, 0.0))
    }

    #[test]
    fn fft_len_resolution() {
        let p = RenderParams::default();
        assert_eq!(p.resolve_fft_len(1).unwrap(), 1024);
        assert_eq!(p.resolve_fft_len(256).unwrap(), 2048);
        let p = RenderParams {
            fft_len: Some(1100),
            ..p
        };
        assert!(p.resolve_fft_len(256).is_err());
    }

    #[test]
    fn identity_hrir_reproduces_input() {
        let x = noise(20_000, 1);
        let hrirs = set(impulse(16, 0, 1.0), impulse(16, 0, 1.0));
        let out = render_binaural(&x, &fixed(0.0, 2.0), &at(0.0, 0.0), &hrirs, &RenderParams::default())
            .unwrap();
        assert_eq!(out.len(), x.len());
        for ch in &out.channels {
            assert!(rel_l2(ch, &x.channels[0]) < 1e-4);
        }
    }

    #[test]
    fn half_gain_right_ear() {
        let x = noise(20_000, 2);
        let hrirs = set(impulse(16, 0, 1.0), impulse(16, 0, 0.5));
        let out = render_binaural(&x, &fixed(0.0, 2.0), &at(0.0, 0.0), &hrirs, &RenderParams::default())
            .unwrap();
        let ratio = rms(&out.channels[1]) / rms(&out.channels[0]);
        assert!((ratio - 0.5).abs() < 1e-3);
    }

    #[test]
    fn lambda_two_doubles_level() {
        let x = noise(20_000, 3);
        let hrirs = set(impulse(16, 0, 1.0), impulse(16, 0, 1.0));
        let p = RenderParams::default();
        let one = render_binaural(&x, &fixed(0.0, 2.0), &at(0.0, 0.0), &hrirs, &p).unwrap();
        let two = render_binaural(&x, &fixed(0.0, 2.0), &at(0.0, 1.0), &hrirs, &p).unwrap();
        let ratio = rms(&two.channels[0]) / rms(&one.channels[0]);
        assert!((ratio - 2.0).abs() < 1e-3);
    }

    #[test]
    fn delayed_impulses_match_time_domain_convolution() {
        let x = noise(30_000, 4);
        let (dl, dr) = (7, 130);
        let hrirs = set(impulse(200, dl, 1.0), impulse(200, dr, 1.0));
        let out = render_binaural(&x, &fixed(0.0, 2.0), &at(0.0, 1.0), &hrirs, &RenderParams::default())
            .unwrap();
        let src = &x.channels[0];
        for (ch, d) in [(0, dl), (1, dr)] {
            let want: Vec<f64> = (0..src.len())
                .map(|n| if n >= d { 2.0 * src[n - d] } else { 0.0 })
                .collect();
            assert!(rel_l2(&out.channels[ch], &want) < 1e-4);
        }
    }

    #[test]
    fn linear_in_input() {
        let x = noise(10_000, 5);
        let scaled = AudioClip::mono(48_000, x.channels[0].iter().map(|v| v * -0.37).collect());
        let hrirs = set(
            (0..32).map(|i| (i as f64 * 0.3).sin() / (i + 1) as f64).collect(),
            (0..32).map(|i| (i as f64 * 0.7).cos() / (i + 1) as f64).collect(),
        );
        let src = Trajectory::new(vec![
            (0.0, SourcePoint::new(-1.0, 1.0)),
            (0.2, SourcePoint::new(1.0, 1.5)),
        ])
        .unwrap();
        let p = RenderParams::default();
        let a = render_binaural(&x, &src, &at(0.3, 0.2), &hrirs, &p).unwrap();
        let b = render_binaural(&scaled, &src, &at(0.3, 0.2), &hrirs, &p).unwrap();
        for (ca, cb) in a.channels.iter().zip(&b.channels) {
            for (u, v) in ca.iter().zip(cb) {
                assert!((u * -0.37 - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lateral_source_favors_near_ear() {
        // left ear loud for sources on the left (270), right ear for the right (90)
        let loud = impulse(8, 0, 1.0);
        let quiet = impulse(8, 0, 0.2);
        let hrirs = HrirSet::new(
            48_000,
            vec![
                (90.0, HrirPair { left: quiet.clone(), right: loud.clone() }),
                (270.0, HrirPair { left: loud, right: quiet }),
            ],
        )
        .unwrap();
        let x = noise(8_000, 6);
        let p = RenderParams::default();
        let right_side = render_binaural(&x, &fixed(1.0, 0.0), &at(0.0, 0.0), &hrirs, &p).unwrap();
        assert!(rms(&right_side.channels[1]) > 4.0 * rms(&right_side.channels[0]));
        let turned = Trajectory::constant(ListenerPose::new(0.0, 0.0, std::f64::consts::PI));
        let flipped = render_binaural(&x, &fixed(1.0, 0.0), &turned, &hrirs, &p).unwrap();
        assert!(rms(&flipped.channels[0]) > 4.0 * rms(&flipped.channels[1]));
    }

    #[test]
    fn rejects_stereo_and_rate_mismatch() {
        let hrirs = set(impulse(4, 0, 1.0), impulse(4, 0, 1.0));
        let p = RenderParams::default();
        let stereo = AudioClip::stereo(48_000, vec![0.0; 10], vec![0.0; 10]);
        assert_eq!(
            render_binaural(&stereo, &fixed(0.0, 1.0), &at(0.0, 0.0), &hrirs, &p).unwrap_err(),
            SoundfieldError::NotMono(2)
        );
        let other = AudioClip::mono(44_100, vec![0.0; 10]);
        assert!(matches!(
            render_binaural(&other, &fixed(0.0, 1.0), &at(0.0, 0.0), &hrirs, &p),
            Err(SoundfieldError::SampleRateMismatch { .. })
        ));
    }

    #[test]
    fn short_and_empty_inputs() {
        let hrirs = set(impulse(4, 0, 1.0), impulse(4, 0, 1.0));
        let p = RenderParams::default();
        for n in [0, 1, 100, 1024] {
            let x = noise(n, 9);
            let out = render_binaural(&x, &fixed(0.0, 1.0), &at(0.0, 0.0), &hrirs, &p).unwrap();
            assert_eq!(out.len(), n);
        }
    }
}
