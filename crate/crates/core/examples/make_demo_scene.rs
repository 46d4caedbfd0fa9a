//! Writes a small synthetic scene: a spherical-head HRIR set, a mono
//! recording, a source path and a listener walk.
//!
//!     cargo run -p sixdof-core --example make_demo_scene -- scenes

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use sixdof_core::audio::write_wav_i16;
use sixdof_core::AudioClip;

const RATE: u32 = 16_000;
const HRIR_LEN: usize = 64;
const HEAD_RADIUS: f64 = 0.0875;
const SPEED_OF_SOUND: f64 = 343.0;

/// Band-limited impulse at fractional position `at`, Hann tapered.
fn impulse(at: f64, gain: f64) -> Vec<f64> {
    (0..HRIR_LEN)
        .map(|n| {
            let x = n as f64 - at;
            let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
            let w = if x.abs() < 8.0 { 0.5 + 0.5 * (PI * x / 8.0).cos() } else { 0.0 };
            gain * sinc * w
        })
        .collect()
}

/// Woodworth-style delay and a simple head-shadow level for one ear.
/// `az_rad` is clockwise from straight ahead.
fn ear(az_rad: f64, right: bool) -> Vec<f64> {
    let s = if right { az_rad.sin() } else { -az_rad.sin() };
    let theta = s.clamp(-1.0, 1.0).asin();
    // the far ear hears the path around the head
    let extra = if theta < 0.0 {
        HEAD_RADIUS / SPEED_OF_SOUND * (-theta - theta.sin())
    } else {
        0.0
    };
    let delay = 12.0 + f64::from(RATE) * (HEAD_RADIUS / SPEED_OF_SOUND * (1.0 - s) + extra);
    let gain = 0.65 + 0.35 * s;
    impulse(delay, gain)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenes".into()));
    let dir = out.join("demo");
    let hrir_dir = dir.join("hrir");
    std::fs::create_dir_all(&hrir_dir)?;

    let mut index = String::new();
    for az in (0..360).step_by(15) {
        let rad = f64::from(az).to_radians();
        for (side, right) in [("l", false), ("r", true)] {
            let name = format!("az{az:03}_{side}.wav");
            write_wav_i16(&hrir_dir.join(&name), &AudioClip::mono(RATE, ear(rad, right)))?;
        }
        writeln!(
            index,
            "[[entry]]\nazimuth = {az}.0\nleft = \"az{az:03}_l.wav\"\nright = \"az{az:03}_r.wav\"\n"
        )?;
    }
    std::fs::write(hrir_dir.join("index"), index)?;

    // a few plucked notes over soft noise, 4 s
    let len = RATE as usize * 4;
    let mut state = 0x2545_f491_4f6c_dd1d_u64;
    let mut noise = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let notes = [220.0, 277.18, 329.63, 440.0, 329.63, 277.18, 246.94, 293.66];
    let recording: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / f64::from(RATE);
            let k = (t * 2.0) as usize;
            let local = t - k as f64 * 0.5;
            let f = notes[k % notes.len()];
            let tone = (2.0 * PI * f * t).sin() + 0.3 * (4.0 * PI * f * t).sin();
            0.35 * (-6.0 * local).exp() * tone + 0.02 * noise()
        })
        .collect();
    write_wav_i16(&dir.join("recording.wav"), &AudioClip::mono(RATE, recording))?;

    // source circles in front of the microphone; listener walks past it
    let mut source = String::from("t,x,y\n");
    for i in 0..=16 {
        let t = f64::from(i) * 0.25;
        let a = t * PI / 2.0;
        writeln!(source, "{t},{:.4},{:.4}", 1.5 * a.cos(), 2.0 + 1.5 * a.sin())?;
    }
    std::fs::write(dir.join("source.csv"), source)?;

    let mut listener = String::from("t,x,y,heading_deg\n");
    for i in 0..=8 {
        let t = f64::from(i) * 0.5;
        writeln!(listener, "{t},{:.3},-0.5,{}", -2.0 + t, -20.0 * t)?;
    }
    std::fs::write(dir.join("listener.csv"), listener)?;

    std::fs::write(
        out.join("demo.toml"),
        "recording_path = \"demo/recording.wav\"\n\
         hrir_path = \"demo/hrir\"\n\
         gain_cap = 4.0\n\
         \n\
         [source]\n\
         path = \"demo/source.csv\"\n\
         \n\
         [listener_default]\n\
         x = 0.0\n\
         y = -1.0\n\
         heading_deg = 0.0\n",
    )?;
    println!("wrote {}", out.join("demo.toml").display());
    Ok(())
}
