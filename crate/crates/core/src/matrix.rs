//! 2×2 complex channel matrices and per-frame snapshot sequences.

use num_complex::Complex64;

/// Transmit polarization index (column of the channel matrix).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    First,
    Second,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::First, Polarization::Second];

    pub fn index(self) -> usize {
        match self {
            Polarization::First => 0,
            Polarization::Second => 1,
        }
    }

    pub fn other(self) -> Polarization {
        match self {
            Polarization::First => Polarization::Second,
            Polarization::Second => Polarization::First,
        }
    }
}

/// One channel realization `H_n`: row = receive polarization,
/// column = transmit polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMatrix(pub [[Complex64; 2]; 2]);

impl ChannelMatrix {
    pub const ZERO: ChannelMatrix = ChannelMatrix([[Complex64::new(0.0, 0.0); 2]; 2]);

    pub fn new(entries: [[Complex64; 2]; 2]) -> Self {
        ChannelMatrix(entries)
    }

    pub fn identity() -> Self {
        Self::diagonal(1.0)
    }

    /// `gain · I`.
    pub fn diagonal(gain: f64) -> Self {
        let z = Complex64::new(0.0, 0.0);
        let g = Complex64::new(gain, 0.0);
        ChannelMatrix([[g, z], [z, g]])
    }

    pub fn from_columns(h1: [Complex64; 2], h2: [Complex64; 2]) -> Self {
        ChannelMatrix([[h1[0], h2[0]], [h1[1], h2[1]]])
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.0[row][col]
    }

    pub fn column(&self, k: Polarization) -> [Complex64; 2] {
        let c = k.index();
        [self.0[0][c], self.0[1][c]]
    }

    pub fn column_norm_sq(&self, k: Polarization) -> f64 {
        let c = k.index();
        self.0[0][c].norm_sqr() + self.0[1][c].norm_sqr()
    }

    /// `‖h1 − h2‖²`, the only channel quantity the polarization bound sees.
    pub fn column_distance_sq(&self) -> f64 {
        (self.0[0][0] - self.0[0][1]).norm_sqr() + (self.0[1][0] - self.0[1][1]).norm_sqr()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.iter().flatten().map(|h| h.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|h| h.re.is_finite() && h.im.is_finite())
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|h| *h *= factor);
        out
    }
}

/// The `N` per-symbol channel snapshots spanned by one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameChannel {
    snapshots: Vec<ChannelMatrix>,
}

impl FrameChannel {
    /// Returns `None` for an empty snapshot list.
    pub fn new(snapshots: Vec<ChannelMatrix>) -> Option<Self> {
        if snapshots.is_empty() {
            None
        } else {
            Some(FrameChannel { snapshots })
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[ChannelMatrix] {
        &self.snapshots
    }

    pub fn snapshots_mut(&mut self) -> &mut [ChannelMatrix] {
        &mut self.snapshots
    }

    pub fn into_snapshots(self) -> Vec<ChannelMatrix> {
        self.snapshots
    }
}
