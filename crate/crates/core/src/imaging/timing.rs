use super::EmiImage;

/// The three parts of a pixel's duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Steer,
    Control,
    Measure,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Steer => "steer",
            Phase::Control => "control",
            Phase::Measure => "measure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub n_pixels: usize,
    /// Totals over the image, s.
    pub total_steer: f64,
    pub total_control: f64,
    pub total_measure: f64,
    /// Per-pixel means, s.
    pub mean_steer: f64,
    pub mean_control: f64,
    pub mean_measure: f64,
    pub dominant: Phase,
}

impl TimingReport {
    pub fn total(&self) -> f64 {
        self.total_steer + self.total_control + self.total_measure
    }
}

pub fn timing_report(image: &EmiImage) -> TimingReport {
    let n = image.len();
    let total_steer: f64 = image.steer.iter().sum();
    let total_control: f64 = image.control.iter().sum();
    let total_measure: f64 = image.measure.iter().sum();
    let mean = |t: f64| if n > 0 { t / n as f64 } else { 0.0 };
    let mut dominant = Phase::Measure;
    let mut best = total_measure;
    for (phase, t) in [(Phase::Control, total_control), (Phase::Steer, total_steer)] {
        if t > best {
            best = t;
            dominant = phase;
        }
    }
    TimingReport {
        n_pixels: n,
        total_steer,
        total_control,
        total_measure,
        mean_steer: mean(total_steer),
        mean_control: mean(total_control),
        mean_measure: mean(total_measure),
        dominant,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamsteer::PixelGrid;

    fn image(steer: f64, control: f64, measure: f64) -> EmiImage {
        let mut img = EmiImage::uniform(PixelGrid::default(), 1.0);
        img.steer.iter_mut().for_each(|v| *v = steer);
        img.control.iter_mut().for_each(|v| *v = control);
        img.measure.iter_mut().for_each(|v| *v = measure);
        img
    }

    #[test]
    fn hardware_sequenced_fast_scan() {
        let rep = timing_report(&image(8e-6, 1e-6, 40e-3));
        assert_eq!(rep.dominant, Phase::Measure);
        assert_eq!(rep.n_pixels, 1225);
        assert!((rep.total_measure - 49.0).abs() < 1e-9);
        assert!((rep.mean_measure - 40e-3).abs() < 1e-15);
    }

    #[test]
    fn software_control_dominates() {
        let rep = timing_report(&image(8e-6, 0.1, 40e-3));
        assert_eq!(rep.dominant, Phase::Control);
        assert!((rep.total() - 1225.0 * (0.1 + 40e-3 + 8e-6)).abs() < 1e-9);
    }
}
