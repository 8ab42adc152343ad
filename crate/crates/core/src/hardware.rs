//! Hardware description consumed by the cache-block designer and the kernel
//! register budget.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Result, TsmmError};
use crate::model::Precision;

pub const DEFAULT_L1D_BYTES: usize = 32 * 1024;
pub const DEFAULT_L2_BYTES: usize = 1024 * 1024;
pub const DEFAULT_CACHE_LINE_BYTES: usize = 64;
pub const DEFAULT_VECTOR_BITS: usize = 128;

const KEYS: [&str; 6] = [
    "l1d_bytes",
    "l2_bytes",
    "cache_line_bytes",
    "vector_bits",
    "simd_register_count",
    "max_threads",
];

/// Cache sizes are per core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HardwareProfile {
    pub l1d_bytes: usize,
    pub l2_bytes: usize,
    pub cache_line_bytes: usize,
    pub vector_bits: usize,
    pub simd_register_count: usize,
    pub max_threads: usize,
}

/// Where [`load_hardware_profile`] reads from.
#[derive(Debug, Clone)]
pub enum ProfileSource {
    File(PathBuf),
    Text(String),
    Probe,
}

fn logical_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn default_register_count() -> usize {
    if cfg!(target_arch = "aarch64") {
        32
    } else {
        16
    }
}

/// Vector width of the widest kernel family this build can dispatch to.
fn detected_vector_bits() -> usize {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx") {
            return 256;
        }
    }
    DEFAULT_VECTOR_BITS
}

impl HardwareProfile {
    /// The documented defaults used whenever probing comes up empty.
    pub fn fallback() -> Self {
        Self {
            l1d_bytes: DEFAULT_L1D_BYTES,
            l2_bytes: DEFAULT_L2_BYTES,
            cache_line_bytes: DEFAULT_CACHE_LINE_BYTES,
            vector_bits: DEFAULT_VECTOR_BITS,
            simd_register_count: default_register_count(),
            max_threads: logical_cores(),
        }
    }

    /// Reads cache geometry from sysfs where available. Never fails; any
    /// field that cannot be read keeps its fallback value.
    pub fn probe() -> Self {
        let mut hw = Self::fallback();
        hw.vector_bits = detected_vector_bits();
        let base = Path::new("/sys/devices/system/cpu/cpu0/cache");
        let Ok(entries) = fs::read_dir(base) else {
            return hw;
        };
        let (mut l1, mut l2, mut line) = (None, None, None);
        for entry in entries.flatten() {
            let dir = entry.path();
            let read = |name: &str| fs::read_to_string(dir.join(name)).ok();
            let (Some(level), Some(kind), Some(size)) = (read("level"), read("type"), read("size"))
            else {
                continue;
            };
            let Some(bytes) = parse_sysfs_size(&size) else {
                continue;
            };
            match (level.trim(), kind.trim()) {
                ("1", "Data") => {
                    l1 = Some(bytes);
                    line = read("coherency_line_size").and_then(|s| s.trim().parse().ok());
                }
                ("2", "Unified") | ("2", "Data") => l2 = Some(bytes),
                _ => {}
            }
        }
        let candidate = Self {
            l1d_bytes: l1.unwrap_or(hw.l1d_bytes),
            l2_bytes: l2.unwrap_or(hw.l2_bytes),
            cache_line_bytes: line.unwrap_or(hw.cache_line_bytes),
            ..hw
        };
        if candidate.validate().is_ok() {
            candidate
        } else {
            hw
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in KEYS.iter().zip(self.values()) {
            if v == 0 {
                return Err(TsmmError::InvalidProfile(format!("{name} must be positive")));
            }
        }
        if self.l1d_bytes > self.l2_bytes {
            return Err(TsmmError::InvalidProfile(format!(
                "l1d_bytes {} exceeds l2_bytes {}",
                self.l1d_bytes, self.l2_bytes
            )));
        }
        if self.l1d_bytes % self.cache_line_bytes != 0 {
            return Err(TsmmError::InvalidProfile(format!(
                "cache_line_bytes {} does not divide l1d_bytes {}",
                self.cache_line_bytes, self.l1d_bytes
            )));
        }
        Ok(())
    }

    fn values(&self) -> [usize; 6] {
        [
            self.l1d_bytes,
            self.l2_bytes,
            self.cache_line_bytes,
            self.vector_bits,
            self.simd_register_count,
            self.max_threads,
        ]
    }

    /// Vector lanes for one element of `precision`, at least 1.
    pub fn lanes(&self, precision: Precision) -> usize {
        (self.vector_bits / (8 * precision.fp_size())).max(1)
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.max_threads = threads.max(1);
        self
    }

    /// Parses the `key = value` profile format. Blank lines and `#`
    /// comments are ignored; every key must appear exactly once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: [Option<usize>; 6] = [None; 6];
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| TsmmError::ProfileParse { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            let slot = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| err(format!("unknown key `{key}`")))?;
            if values[slot].is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
            let parsed: usize = value
                .trim()
                .parse()
                .map_err(|_| err(format!("`{}` is not a non-negative integer", value.trim())))?;
            values[slot] = Some(parsed);
        }
        if let Some(missing) = values.iter().position(Option::is_none) {
            return Err(TsmmError::ProfileParse {
                line: last_line + 1,
                message: format!("missing required key `{}`", KEYS[missing]),
            });
        }
        let v = values.map(|v| v.unwrap_or_default());
        let hw = Self {
            l1d_bytes: v[0],
            l2_bytes: v[1],
            cache_line_bytes: v[2],
            vector_bits: v[3],
            simd_register_count: v[4],
            max_threads: v[5],
        };
        hw.validate().map_err(|e| TsmmError::ProfileParse {
            line: last_line,
            message: e.to_string(),
        })?;
        Ok(hw)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(self.values()) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Stable key for caches: hex prefix of a SHA-256 over the canonical
    /// text plus the precision (kernel choices differ per precision).
    pub fn fingerprint(&self, precision: Precision) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        h.update(precision.name().as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

fn parse_sysfs_size(s: &str) -> Option<usize> {
    let s = s.trim();
    let (digits, mult) = match s.chars().last()? {
        'K' => (&s[..s.len() - 1], 1024),
        'M' => (&s[..s.len() - 1], 1024 * 1024),
        _ => (s, 1),
    };
    digits.parse::<usize>().ok().map(|v| v * mult)
}

/// Loads a profile from a file, literal text, or by probing the host.
/// Empty text means "nothing supplied" and yields the fallback profile.
pub fn load_hardware_profile(source: &ProfileSource) -> Result<HardwareProfile> {
    match source {
        ProfileSource::File(path) => HardwareProfile::parse(&fs::read_to_string(path)?),
        ProfileSource::Text(text) if text.trim().is_empty() => Ok(HardwareProfile::fallback()),
        ProfileSource::Text(text) => HardwareProfile::parse(text),
        ProfileSource::Probe => Ok(HardwareProfile::probe()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
l1d_bytes = 32768
l2_bytes = 1048576
cache_line_bytes = 64
vector_bits = 128
simd_register_count = 32
max_threads = 8
";

    #[test]
    fn parses_declared_values() {
        let hw = load_hardware_profile(&ProfileSource::Text(SAMPLE.into())).unwrap();
        assert_eq!(
            hw,
            HardwareProfile {
                l1d_bytes: 32768,
                l2_bytes: 1048576,
                cache_line_bytes: 64,
                vector_bits: 128,
                simd_register_count: 32,
                max_threads: 8,
            }
        );
        assert_eq!(HardwareProfile::parse(&hw.to_text()).unwrap(), hw);
    }

    #[test]
    fn missing_l2_is_an_error() {
        let text = SAMPLE.replace("l2_bytes = 1048576\n", "");
        match HardwareProfile::parse(&text) {
            Err(TsmmError::ProfileParse { message, .. }) => assert!(message.contains("l2_bytes")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = format!("{SAMPLE}l3_bytes = 4\n");
        match HardwareProfile::parse(&text) {
            Err(TsmmError::ProfileParse { line: 7, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_value_and_duplicate_rejected() {
        assert!(HardwareProfile::parse(&SAMPLE.replace("= 64", "= sixty")).is_err());
        assert!(HardwareProfile::parse(&format!("{SAMPLE}max_threads = 2\n")).is_err());
    }

    #[test]
    fn ordering_violation_rejected() {
        let text = SAMPLE.replace("l2_bytes = 1048576", "l2_bytes = 1024");
        assert!(HardwareProfile::parse(&text).is_err());
    }

    #[test]
    fn empty_source_gives_defaults() {
        let hw = load_hardware_profile(&ProfileSource::Text("  \n".into())).unwrap();
        assert_eq!(hw.l1d_bytes, 32 * 1024);
        assert_eq!(hw.l2_bytes, 1024 * 1024);
        assert_eq!(hw.cache_line_bytes, 64);
        assert_eq!(hw.vector_bits, 128);
        assert_eq!(hw.max_threads, logical_cores());
    }

    #[test]
    fn probe_is_always_valid() {
        let hw = HardwareProfile::probe();
        hw.validate().unwrap();
    }

    #[test]
    fn fingerprint_depends_on_precision_and_values() {
        let hw = HardwareProfile::parse(SAMPLE).unwrap();
        assert_eq!(hw.fingerprint(Precision::Single), hw.fingerprint(Precision::Single));
        assert_ne!(hw.fingerprint(Precision::Single), hw.fingerprint(Precision::Double));
        assert_ne!(hw.fingerprint(Precision::Single), hw.with_threads(3).fingerprint(Precision::Single));
    }

    #[test]
    fn sysfs_sizes() {
        assert_eq!(parse_sysfs_size("48K\n"), Some(48 * 1024));
        assert_eq!(parse_sysfs_size("2M"), Some(2 << 20));
        assert_eq!(parse_sysfs_size("512"), Some(512));
        assert_eq!(parse_sysfs_size("x"), None);
    }
}
