//! Link and detector model: fiber loss, detection efficiency and dark
//! counts mapped to per-frame coincidence statistics.
//!
//! Loss sits entirely on Bob's arm since Alice holds the source. Frames
//! carry at most one pair; frames with two detections on one side are
//! discarded by post-selection.

use crate::error::{ensure_finite, Error, Result};
use crate::gaussian::SourceParams;

/// Default real-time length of one normalized time unit (one `sigma_cor`).
pub const DEFAULT_TIME_UNIT_SECONDS: f64 = 10e-12;
/// Default mean number of pairs per frame.
pub const DEFAULT_PAIRS_PER_FRAME: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// System detection efficiency, same for both parties.
    pub efficiency: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    /// RMS timing jitter per detector, in source time units.
    pub jitter_rms: f64,
}

impl DetectorParams {
    pub fn new(efficiency: f64, dark_rate: f64, jitter_rms: f64) -> Result<Self> {
        let d = Self {
            efficiency,
            dark_rate,
            jitter_rms,
        };
        d.validate()?;
        Ok(d)
    }

    /// 93% efficiency, 1000 dark counts per second, jitter of `2 sigma_cor / 3`.
    pub fn reference(source: &SourceParams) -> Self {
        Self {
            efficiency: 0.93,
            dark_rate: 1000.0,
            jitter_rms: 2.0 * source.sigma_cor() / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("efficiency", self.efficiency)?;
        ensure_finite("dark_rate", self.dark_rate)?;
        ensure_finite("jitter_rms", self.jitter_rms)?;
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid("efficiency", "must lie in (0, 1]"));
        }
        if self.dark_rate < 0.0 {
            return Err(Error::invalid("dark_rate", "must be non-negative"));
        }
        if self.jitter_rms < 0.0 {
            return Err(Error::invalid("jitter_rms", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub length_km: f64,
    pub loss_db_per_km: f64,
    /// Fixed extra loss on Bob's arm, in dB.
    pub insertion_loss_db: f64,
    /// Frame duration in source time units.
    pub frame_duration: f64,
    /// Seconds per source time unit.
    pub time_unit_seconds: f64,
    /// Mean number of photon pairs emitted per frame.
    pub pairs_per_frame: f64,
}

impl ChannelParams {
    /// Zero-length link with 0.2 dB/km fiber and a frame of one coherence time.
    pub fn reference(source: &SourceParams) -> Self {
        Self {
            length_km: 0.0,
            loss_db_per_km: 0.2,
            insertion_loss_db: 0.0,
            frame_duration: source.sigma_coh(),
            time_unit_seconds: DEFAULT_TIME_UNIT_SECONDS,
            pairs_per_frame: DEFAULT_PAIRS_PER_FRAME,
        }
    }

    pub fn with_length(mut self, length_km: f64) -> Self {
        self.length_km = length_km;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_km", self.length_km),
            ("loss_db_per_km", self.loss_db_per_km),
            ("insertion_loss_db", self.insertion_loss_db),
            ("frame_duration", self.frame_duration),
            ("time_unit_seconds", self.time_unit_seconds),
            ("pairs_per_frame", self.pairs_per_frame),
        ] {
            ensure_finite(name, v)?;
        }
        if self.length_km < 0.0 {
            return Err(Error::invalid("length_km", "must be non-negative"));
        }
        if self.loss_db_per_km < 0.0 {
            return Err(Error::invalid("loss_db_per_km", "must be non-negative"));
        }
        if self.insertion_loss_db < 0.0 {
            return Err(Error::invalid("insertion_loss_db", "must be non-negative"));
        }
        if self.frame_duration <= 0.0 {
            return Err(Error::invalid("frame_duration", "must be positive"));
        }
        if self.time_unit_seconds <= 0.0 {
            return Err(Error::invalid("time_unit_seconds", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.pairs_per_frame) {
            return Err(Error::invalid(
                "pairs_per_frame",
                format!(
                    "must lie in [0, 1]; multi-pair frames are outside the model (got {})",
                    self.pairs_per_frame
                ),
            ));
        }
        Ok(())
    }

    pub fn transmittance(&self) -> f64 {
        let loss_db = self.loss_db_per_km * self.length_km + self.insertion_loss_db;
        10f64.powf(-loss_db / 10.0)
    }

    /// Pair emission rate in pairs per second.
    pub fn pair_rate(&self) -> f64 {
        self.pairs_per_frame / self.frame_seconds()
    }

    pub fn frame_seconds(&self) -> f64 {
        self.frame_duration * self.time_unit_seconds
    }
}

/// How accidental coincidences split by origin; fractions sum to one when
/// any accidental is possible, and are all zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccidentalMix {
    /// Alice detects her photon, Bob registers a dark count.
    pub alice_signal_bob_dark: f64,
    /// Alice registers a dark count, Bob detects his photon.
    pub alice_dark_bob_signal: f64,
    /// Both detections are dark counts.
    pub dark_dark: f64,
}

impl AccidentalMix {
    pub const DARK_ONLY: AccidentalMix = AccidentalMix {
        alice_signal_bob_dark: 0.0,
        alice_dark_bob_signal: 0.0,
        dark_dark: 1.0,
    };
}

/// Per-frame coincidence statistics consumed by the information model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkStatistics {
    pub p_signal_coincidence: f64,
    pub p_accidental_coincidence: f64,
    pub signal_fraction: f64,
    pub coincidences_per_second: f64,
    /// Frame duration in source time units; accidental times are uniform over it.
    pub frame_duration: f64,
    pub accidental_mix: AccidentalMix,
}

impl LinkStatistics {
    /// Statistics specified directly by their post-selected mixture.
    pub fn from_fractions(
        signal_fraction: f64,
        accidental_mix: AccidentalMix,
        frame_duration: f64,
    ) -> Result<Self> {
        ensure_finite("signal_fraction", signal_fraction)?;
        if !(0.0..=1.0).contains(&signal_fraction) {
            return Err(Error::invalid("signal_fraction", "must lie in [0, 1]"));
        }
        if !(frame_duration > 0.0 && frame_duration.is_finite()) {
            return Err(Error::invalid("frame_duration", "must be positive"));
        }
        let m = accidental_mix;
        let total = m.alice_signal_bob_dark + m.alice_dark_bob_signal + m.dark_dark;
        let parts = [
            m.alice_signal_bob_dark,
            m.alice_dark_bob_signal,
            m.dark_dark,
        ];
        if parts.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::invalid(
                "accidental_mix",
                "fractions must be non-negative",
            ));
        }
        if signal_fraction < 1.0 && (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("accidental_mix", "fractions must sum to 1"));
        }
        Ok(Self {
            p_signal_coincidence: signal_fraction,
            p_accidental_coincidence: 1.0 - signal_fraction,
            signal_fraction,
            coincidences_per_second: 0.0,
            frame_duration,
            accidental_mix,
        })
    }

    /// Noiseless link: every post-selected frame is a true pair.
    pub fn ideal(frame_duration: f64) -> Self {
        Self::from_fractions(1.0, AccidentalMix::default(), frame_duration)
            .expect("ideal link statistics are valid")
    }

    /// Post-selected weights `(signal, alice-signal/bob-dark, alice-dark/bob-signal, dark-dark)`.
    pub fn mixture_weights(&self) -> [f64; 4] {
        let acc = 1.0 - self.signal_fraction;
        let m = self.accidental_mix;
        [
            self.signal_fraction,
            acc * m.alice_signal_bob_dark,
            acc * m.alice_dark_bob_signal,
            acc * m.dark_dark,
        ]
    }
}

/// Coincidence statistics of one link.
pub fn link_statistics(
    channel: &ChannelParams,
    detector: &DetectorParams,
) -> Result<LinkStatistics> {
    channel.validate()?;
    detector.validate()?;
    let mu = channel.pairs_per_frame;
    let eff = detector.efficiency;
    let t = channel.transmittance();
    let p_dark = detector.dark_rate * channel.frame_seconds();
    if p_dark > 1.0 {
        return Err(Error::invalid(
            "dark_rate",
            format!("dark-count probability per frame {p_dark} exceeds 1"),
        ));
    }
    let quiet = 1.0 - p_dark;
    let bob_click = eff * t;

    let p_signal = mu * eff * bob_click * quiet * quiet;
    let p_ab = mu * eff * (1.0 - bob_click) * quiet * p_dark;
    let p_ba = mu * (1.0 - eff) * bob_click * p_dark * quiet;
    let p_dd = (1.0 - mu + mu * (1.0 - eff) * (1.0 - bob_click)) * p_dark * p_dark;
    let p_acc = p_ab + p_ba + p_dd;
    let total = p_signal + p_acc;

    let signal_fraction = if total > 0.0 { p_signal / total } else { 0.0 };
    let accidental_mix = if p_acc > 0.0 {
        AccidentalMix {
            alice_signal_bob_dark: p_ab / p_acc,
            alice_dark_bob_signal: p_ba / p_acc,
            dark_dark: p_dd / p_acc,
        }
    } else {
        AccidentalMix::default()
    };
    Ok(LinkStatistics {
        p_signal_coincidence: p_signal,
        p_accidental_coincidence: p_acc,
        signal_fraction,
        coincidences_per_second: total / channel.frame_seconds(),
        frame_duration: channel.frame_duration,
        accidental_mix,
    })
}

/// Element-wise [`link_statistics`] over ascending, non-negative lengths.
pub fn distance_to_statistics_sweep(
    channel: &ChannelParams,
    detector: &DetectorParams,
    lengths_km: &[f64],
) -> Result<Vec<LinkStatistics>> {
    let mut prev = f64::NEG_INFINITY;
    for (i, &l) in lengths_km.iter().enumerate() {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::invalid("lengths", "must be finite and non-negative").at_index(i));
        }
        if l < prev {
            return Err(Error::invalid("lengths", "must be ascending").at_index(i));
        }
        prev = l;
    }
    lengths_km
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            link_statistics(&channel.with_length(l), detector).map_err(|e| e.at_index(i))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn src() -> SourceParams {
        SourceParams::with_dimension(8.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn lossless_noiseless_single_pair() {
        let mut ch = ChannelParams::reference(&src());
        ch.pairs_per_frame = 1.0;
        let det = DetectorParams::new(1.0, 0.0, 0.0).unwrap();
        let s = link_statistics(&ch, &det).unwrap();
        assert_eq!(s.signal_fraction, 1.0);
        assert_eq!(s.p_accidental_coincidence, 0.0);
    }

    #[test]
    fn blind_detectors() {
        // efficiency must be positive, so approach the blind limit
        let ch = ChannelParams::reference(&src());
        let det = DetectorParams {
            efficiency: 0.0,
            dark_rate: 1000.0,
            jitter_rms: 0.0,
        };
        assert!(det.validate().is_err());
        let s = link_statistics(
            &ch,
            &DetectorParams {
                efficiency: 1e-300,
                ..det
            },
        );
        let s = s.unwrap();
        assert!(s.p_signal_coincidence < 1e-290);
        assert!(s.signal_fraction < 1e-200);
    }

    #[test]
    fn rejects_multi_pair_and_bad_params() {
        let mut ch = ChannelParams::reference(&src());
        ch.pairs_per_frame = 1.5;
        let det = DetectorParams::reference(&src());
        assert!(link_statistics(&ch, &det).is_err());
        assert!(DetectorParams::new(0.5, -1.0, 0.0).is_err());
        assert!(DetectorParams::new(0.5, 1.0, -1.0).is_err());
        let mut ch = ChannelParams::reference(&src());
        ch.frame_duration = 0.0;
        assert!(link_statistics(&ch, &det).is_err());
    }

    #[test]
    fn reference_link_at_200_km() {
        let s = src();
        let stats = link_statistics(
            &ChannelParams::reference(&s).with_length(200.0),
            &DetectorParams::reference(&s),
        )
        .unwrap();
        // t = 1e-4, p_dark = 8e-8 per 80 ps frame
        let p_dark: f64 = 1000.0 * 80e-12;
        let sig = 0.1 * 0.93 * 0.93 * 1e-4 * (1.0 - p_dark).powi(2);
        assert_relative_eq!(stats.p_signal_coincidence, sig, max_relative = 1e-12);
        assert!(stats.signal_fraction > 0.999 && stats.signal_fraction < 1.0);
        let w = stats.mixture_weights();
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn sweep_edge_cases() {
        let s = src();
        let ch = ChannelParams::reference(&s);
        let det = DetectorParams::reference(&s);
        assert!(distance_to_statistics_sweep(&ch, &det, &[])
            .unwrap()
            .is_empty());
        let one = distance_to_statistics_sweep(&ch, &det, &[0.0]).unwrap();
        assert_eq!(one[0], link_statistics(&ch, &det).unwrap());
        let three = distance_to_statistics_sweep(&ch, &det, &[0.0, 100.0, 200.0]).unwrap();
        assert!(three[0].signal_fraction > three[1].signal_fraction);
        assert!(three[1].signal_fraction > three[2].signal_fraction);
        match distance_to_statistics_sweep(&ch, &det, &[0.0, 10.0, 5.0]) {
            Err(Error::Sweep { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected indexed error, got {other:?}"),
        }
    }
}
