//! Small shared helpers: content hashing and number formatting.

use sha2::{Digest, Sha256};

/// Incremental SHA-256 content hasher for provenance fingerprints.
pub struct ContentHash {
    hasher: Sha256,
}

impl ContentHash {
    pub fn new() -> Self {
        Self {
            hasher: Sha256::new(),
        }
    }

    pub fn update_bytes(&mut self, bytes: &[u8]) {
        self.hasher.update(bytes);
    }

    pub fn update_str(&mut self, s: &str) {
        // Length prefix keeps ("ab","c") distinct from ("a","bc").
        self.hasher.update((s.len() as u64).to_le_bytes());
        self.hasher.update(s.as_bytes());
    }

    pub fn update_f64(&mut self, v: f64) {
        self.hasher.update(v.to_le_bytes());
    }

    pub fn update_u64(&mut self, v: u64) {
        self.hasher.update(v.to_le_bytes());
    }

    pub fn update_f64_slice(&mut self, vs: &[f64]) {
        for v in vs {
            self.hasher.update(v.to_le_bytes());
        }
    }

    /// Full 64-hex-digit digest.
    pub fn hex(self) -> String {
        let digest = self.hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Truncated 16-hex-digit digest, used for fingerprints and cache keys.
    pub fn short_hex(self) -> String {
        let mut h = self.hex();
        h.truncate(16);
        h
    }

    /// First 8 digest bytes as a little-endian u64, used to derive seeds.
    pub fn to_u64(self) -> u64 {
        let digest = self.hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}

impl Default for ContentHash {
    fn default() -> Self {
        Self::new()
    }
}

/// SHA-256 hex digest of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = ContentHash::new();
    h.update_bytes(bytes);
    h.hex()
}

/// Derive an independent RNG seed from a base seed and a role path, e.g.
/// `derive_seed(seed, &["tree", "17"])`. Hash-based so unrelated roles never
/// collide and insertion of new roles leaves existing streams unchanged.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = ContentHash::new();
    h.update_u64(base);
    for p in parts {
        h.update_str(p);
    }
    h.to_u64()
}

/// Format a frequency for feature names and band labels: integral values keep
/// one decimal ("0.0", "18.0"), fractional values print shortest round-trip
/// ("0.25").
pub fn fmt_hz(v: f64) -> String {
    if v == v.trunc() {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// Shortest round-trip decimal form of an f64. Files written with this parse
/// back to the identical bit pattern.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
