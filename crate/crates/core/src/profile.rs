//! Descriptive statistics per terpene subclass: descriptor distributions,
//! extremes, H-bond compliance and Lipinski rule-of-five violations.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ingest::{names, MoleculeRecord, RecordSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    /// Values inside the clip range (all non-missing values without a clip).
    pub count: usize,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub histogram: Histogram,
    pub clip: Option<(f64, f64)>,
    /// Non-missing values outside the clip range.
    pub suppressed: usize,
    pub suppressed_fraction: f64,
    /// Set when there were no usable values.
    pub empty: bool,
}

/// Summary statistics and histogram of the non-missing values.
///
/// With a clip range `(lo, hi)`, values outside `[lo, hi]` are suppressed
/// and excluded from every statistic. The histogram spans the finite clip
/// bounds, falling back to the data range for infinite or absent bounds.
pub fn summarize(values: &[Option<f64>], clip: Option<(f64, f64)>, bins: usize) -> Result<DistributionSummary> {
    if bins == 0 {
        return Err(invalid("histogram needs at least one bin"));
    }
    if let Some((lo, hi)) = clip {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(invalid(format!("invalid clip range ({lo}, {hi})")));
        }
    }
    let present: Vec<f64> = values.iter().flatten().copied().filter(|v| !v.is_nan()).collect();
    let inside: Vec<f64> = match clip {
        Some((lo, hi)) => present.iter().copied().filter(|v| *v >= lo && *v <= hi).collect(),
        None => present.clone(),
    };
    let suppressed = present.len() - inside.len();
    let suppressed_fraction = if present.is_empty() {
        0.0
    } else {
        suppressed as f64 / present.len() as f64
    };
    if inside.is_empty() {
        return Ok(DistributionSummary {
            count: 0,
            mean: None,
            std: None,
            min: None,
            max: None,
            histogram: Histogram {
                edges: Vec::new(),
                counts: Vec::new(),
            },
            clip,
            suppressed,
            suppressed_fraction,
            empty: true,
        });
    }
    let n = inside.len() as f64;
    let mean = inside.iter().sum::<f64>() / n;
    let std = (inside.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = inside.iter().copied().fold(f64::INFINITY, f64::min);
    let max = inside.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // guards the invariant min ≤ mean ≤ max against rounding
    let mean = mean.clamp(min, max);
    let (lo, hi) = match clip {
        Some((a, b)) => (if a.is_finite() { a } else { min }, if b.is_finite() { b } else { max }),
        None => (min, max),
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for v in &inside {
        let b = if hi > lo {
            (((v - lo) / (hi - lo)) * bins as f64).floor() as usize
        } else {
            0
        };
        counts[b.min(bins - 1)] += 1;
    }
    Ok(DistributionSummary {
        count: inside.len(),
        mean: Some(mean),
        std: Some(std),
        min: Some(min),
        max: Some(max),
        histogram: Histogram { edges, counts },
        clip,
        suppressed,
        suppressed_fraction,
        empty: false,
    })
}

pub const MAX_MOLECULAR_WEIGHT: f64 = 500.0;
pub const MAX_LOG_P: f64 = 5.0;
pub const MAX_HBD: f64 = 5.0;
pub const MAX_HBA: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipinskiInputs {
    pub molecular_weight: f64,
    pub log_p: f64,
    pub hbd: f64,
    pub hba: f64,
}

impl LipinskiInputs {
    /// `None` if any of the four descriptors is missing.
    pub fn from_record(rs: &RecordSet, r: &MoleculeRecord) -> Option<Self> {
        Some(Self {
            molecular_weight: rs.descriptor(r, names::MOLECULAR_WEIGHT)?,
            log_p: rs.descriptor(r, names::LOG_P)?,
            hbd: rs.descriptor(r, names::HBD_COUNT)?,
            hba: rs.descriptor(r, names::HBA_COUNT)?,
        })
    }
}

/// Number of rule-of-five rules broken. A value exactly at a threshold complies.
pub fn lipinski_violations(x: &LipinskiInputs) -> u8 {
    u8::from(x.hbd > MAX_HBD)
        + u8::from(x.hba > MAX_HBA)
        + u8::from(x.molecular_weight > MAX_MOLECULAR_WEIGHT)
        + u8::from(x.log_p > MAX_LOG_P)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipinskiProfile {
    /// Records with all four descriptors present.
    pub evaluated: usize,
    pub skipped: usize,
    /// `histogram[v]` counts records with exactly `v` violations.
    pub histogram: [usize; 5],
    pub shares: [f64; 5],
    pub hba_evaluated: usize,
    pub hba_compliant_share: Option<f64>,
    pub hbd_evaluated: usize,
    pub hbd_compliant_share: Option<f64>,
}

fn share(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| part as f64 / whole as f64)
}

pub fn lipinski_profile<'a>(rs: &RecordSet, records: impl Iterator<Item = &'a MoleculeRecord>) -> LipinskiProfile {
    let mut histogram = [0usize; 5];
    let (mut skipped, mut hba_n, mut hba_ok, mut hbd_n, mut hbd_ok) = (0, 0, 0, 0, 0);
    for r in records {
        if let Some(hba) = rs.descriptor(r, names::HBA_COUNT) {
            hba_n += 1;
            hba_ok += usize::from(hba <= MAX_HBA);
        }
        if let Some(hbd) = rs.descriptor(r, names::HBD_COUNT) {
            hbd_n += 1;
            hbd_ok += usize::from(hbd <= MAX_HBD);
        }
        match LipinskiInputs::from_record(rs, r) {
            Some(x) => histogram[lipinski_violations(&x) as usize] += 1,
            None => skipped += 1,
        }
    }
    let evaluated: usize = histogram.iter().sum();
    LipinskiProfile {
        evaluated,
        skipped,
        histogram,
        shares: histogram.map(|c| share(c, evaluated).unwrap_or(0.0)),
        hba_evaluated: hba_n,
        hba_compliant_share: share(hba_ok, hba_n),
        hbd_evaluated: hbd_n,
        hbd_compliant_share: share(hbd_ok, hbd_n),
    }
}

/// Bins and optional clip range for one profiled descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub descriptor: String,
    pub bins: usize,
    pub clip: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub descriptors: Vec<HistogramSpec>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        let spec = |d: &str, bins, clip| HistogramSpec {
            descriptor: d.to_string(),
            bins,
            clip,
        };
        Self {
            descriptors: vec![
                spec(names::MOLECULAR_WEIGHT, 60, Some((0.0, 3000.0))),
                spec(names::LOG_P, 64, Some((-12.0, 20.0))),
                spec(names::NP_LIKENESS, 40, None),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorProfile {
    pub descriptor: String,
    /// Statistics over every non-missing value.
    pub summary: DistributionSummary,
    /// The same values restricted to the configured clip range.
    pub clipped: Option<DistributionSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubclassBlock {
    /// Subclass name, or `"all"` for the overall block.
    pub subclass: String,
    pub count: usize,
    pub share: f64,
    pub descriptors: Vec<DescriptorProfile>,
    pub lipinski: LipinskiProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub total: usize,
    pub overall: SubclassBlock,
    pub subclasses: Vec<SubclassBlock>,
}

fn block(
    rs: &RecordSet,
    label: String,
    records: &[&MoleculeRecord],
    total: usize,
    config: &ProfileConfig,
) -> Result<SubclassBlock> {
    let mut descriptors = Vec::new();
    for spec in &config.descriptors {
        let values: Vec<Option<f64>> = match rs.column_index(&spec.descriptor) {
            Some(j) => records.iter().map(|r| r.descriptors[j]).collect(),
            None => vec![None; records.len()],
        };
        descriptors.push(DescriptorProfile {
            descriptor: spec.descriptor.clone(),
            summary: summarize(&values, None, spec.bins)?,
            clipped: spec.clip.map(|c| summarize(&values, Some(c), spec.bins)).transpose()?,
        });
    }
    Ok(SubclassBlock {
        subclass: label,
        count: records.len(),
        share: share(records.len(), total).unwrap_or(0.0),
        descriptors,
        lipinski: lipinski_profile(rs, records.iter().copied()),
    })
}

/// One block per present subclass (in class order) plus an overall block.
///
/// Records without a recognized subclass count only towards the overall block.
pub fn subclass_profile(rs: &RecordSet, config: &ProfileConfig) -> Result<ProfileReport> {
    if rs.is_empty() {
        return Err(invalid("cannot profile an empty record set"));
    }
    let all: Vec<&MoleculeRecord> = rs.records.iter().collect();
    let total = all.len();
    let overall = block(rs, "all".into(), &all, total, config)?;
    let mut subclasses = Vec::new();
    for (label, _) in rs.subclass_counts() {
        let members: Vec<&MoleculeRecord> = all.iter().copied().filter(|r| r.subclass == Some(label)).collect();
        subclasses.push(block(rs, label.name().to_string(), &members, total, config)?);
    }
    Ok(ProfileReport {
        total,
        overall,
        subclasses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extreme {
    pub id: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub descriptor: String,
    pub min: Extreme,
    pub max: Extreme,
}

/// Records holding the smallest and largest value of `descriptor`.
/// Ties go to the lexicographically first id.
pub fn extremes(rs: &RecordSet, descriptor: &str) -> Result<Extremes> {
    let j = rs
        .column_index(descriptor)
        .ok_or_else(|| invalid(format!("descriptor {descriptor:?} not present")))?;
    let mut min: Option<(&str, f64)> = None;
    let mut max: Option<(&str, f64)> = None;
    for r in &rs.records {
        let Some(v) = r.descriptors[j] else { continue };
        let id = r.id.as_str();
        if min.is_none_or(|(mid, mv)| v < mv || (v == mv && id < mid)) {
            min = Some((id, v));
        }
        if max.is_none_or(|(mid, mv)| v > mv || (v == mv && id < mid)) {
            max = Some((id, v));
        }
    }
    match (min, max) {
        (Some(lo), Some(hi)) => Ok(Extremes {
            descriptor: descriptor.to_string(),
            min: Extreme {
                id: lo.0.to_string(),
                value: lo.1,
            },
            max: Extreme {
                id: hi.0.to_string(),
                value: hi.1,
            },
        }),
        _ => Err(Error::InvalidArgument(format!(
            "descriptor {descriptor:?} has no values"
        ))),
    }
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}%", 100.0 * x))
}

/// Aligned plain-text rendering of a profile report.
pub fn render_table(report: &ProfileReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>7} {:>7} {:>9} {:>7} {:>7} {:>8} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "subclass", "count", "share", "MW mean", "logP", "NPL", "HBA<=10", "HBD<=5", "v0", "v1", "v2", "v3", "v4"
    );
    let mean_of = |b: &SubclassBlock, d: &str| {
        b.descriptors
            .iter()
            .find(|p| p.descriptor == d)
            .and_then(|p| p.summary.mean)
    };
    for b in report.subclasses.iter().chain(std::iter::once(&report.overall)) {
        let l = &b.lipinski;
        let _ = writeln!(
            out,
            "{:<20} {:>7} {:>7} {:>9} {:>7} {:>7} {:>8} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7}",
            b.subclass,
            b.count,
            pct(Some(b.share)),
            fmt_opt(mean_of(b, names::MOLECULAR_WEIGHT), 1),
            fmt_opt(mean_of(b, names::LOG_P), 2),
            fmt_opt(mean_of(b, names::NP_LIKENESS), 2),
            pct(l.hba_compliant_share),
            pct(l.hbd_compliant_share),
            pct(Some(l.shares[0])),
            pct(Some(l.shares[1])),
            pct(Some(l.shares[2])),
            pct(Some(l.shares[3])),
            pct(Some(l.shares[4])),
        );
    }
    out
}

/// Histogram bins as CSV: `subclass,descriptor,variant,bin_lo,bin_hi,count`.
pub fn write_histograms_csv<W: Write>(report: &ProfileReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subclass", "descriptor", "variant", "bin_lo", "bin_hi", "count"])?;
    for b in std::iter::once(&report.overall).chain(&report.subclasses) {
        for d in &b.descriptors {
            let variants = [("full", Some(&d.summary)), ("clipped", d.clipped.as_ref())];
            for (variant, s) in variants {
                let Some(s) = s else { continue };
                for (i, c) in s.histogram.counts.iter().enumerate() {
                    w.write_record([
                        b.subclass.clone(),
                        d.descriptor.clone(),
                        variant.to_string(),
                        s.histogram.edges[i].to_string(),
                        s.histogram.edges[i + 1].to_string(),
                        c.to_string(),
                    ])?;
                }
            }
        }
        let l = &b.lipinski;
        for (v, c) in l.histogram.iter().enumerate() {
            w.write_record([
                b.subclass.clone(),
                "lipinski_violations".into(),
                "full".into(),
                v.to_string(),
                v.to_string(),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_dataset, SchemaConfig};
    use proptest::prelude::*;

    #[test]
    fn constant_values_single_bin() {
        let s = summarize(&[Some(1.0), Some(1.0), Some(1.0)], None, 1).unwrap();
        assert_eq!(s.count, 3);
        assert_eq!(s.mean, Some(1.0));
        assert_eq!(s.std, Some(0.0));
        assert_eq!(s.histogram.counts, vec![3]);
    }

    #[test]
    fn missing_and_clip() {
        let v = [Some(1.0), None, Some(5.0), Some(2500.0), Some(3.0)];
        let s = summarize(&v, Some((0.0, 2000.0)), 4).unwrap();
        assert_eq!(s.count, 3);
        assert_eq!(s.suppressed, 1);
        assert_eq!(s.suppressed_fraction, 0.25);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 3);
        assert_eq!(s.histogram.edges, vec![0.0, 500.0, 1000.0, 1500.0, 2000.0]);
        assert_eq!(s.max, Some(5.0));
    }

    #[test]
    fn all_missing_flagged() {
        let s = summarize(&[None, None], None, 5).unwrap();
        assert!(s.empty);
        assert_eq!(s.count, 0);
        assert!(summarize(&[Some(1.0)], None, 0).is_err());
    }

    #[test]
    fn violation_extremes() {
        let all = LipinskiInputs {
            molecular_weight: 600.0,
            log_p: 6.0,
            hbd: 6.0,
            hba: 11.0,
        };
        assert_eq!(lipinski_violations(&all), 4);
        let none = LipinskiInputs {
            molecular_weight: 136.2,
            log_p: 2.0,
            hbd: 0.0,
            hba: 0.0,
        };
        assert_eq!(lipinski_violations(&none), 0);
        let at_threshold = LipinskiInputs {
            molecular_weight: 500.0,
            log_p: 5.0,
            hbd: 5.0,
            hba: 10.0,
        };
        assert_eq!(lipinski_violations(&at_threshold), 0);
    }

    fn sample() -> RecordSet {
        let text = "\
coconut_id,chemicalSuperClass,chemicalSubClass,molecular_weight,alogp,npl_score,hBondAcceptorCount,hBondDonorCount
b,L,Monoterpenoids,136.2,2.0,1.0,0,0
a,L,Monoterpenoids,94.2,3.0,2.0,1,1
c,L,Triterpenoids,2680.1,50.2,3.0,30,20
d,L,Triterpenoids,456.7,-10.4,2.5,4,NULL
e,L,Diterpenoids,94.2,1.0,NULL,12,2
";
        parse_dataset(text.as_bytes(), &SchemaConfig::default()).unwrap()
    }

    #[test]
    fn extremes_with_ties() {
        let rs = sample();
        let e = extremes(&rs, names::MOLECULAR_WEIGHT).unwrap();
        assert_eq!((e.min.id.as_str(), e.min.value), ("a", 94.2));
        assert_eq!((e.max.id.as_str(), e.max.value), ("c", 2680.1));
        assert!(extremes(&rs, "nope").is_err());

        let mut one = rs.clone();
        one.records.truncate(1);
        let e = extremes(&one, names::LOG_P).unwrap();
        assert_eq!(e.min, e.max);
    }

    #[test]
    fn profile_blocks() {
        let rs = sample();
        let p = subclass_profile(&rs, &ProfileConfig::default()).unwrap();
        assert_eq!(p.total, 5);
        assert_eq!(
            p.subclasses.iter().map(|b| b.subclass.as_str()).collect::<Vec<_>>(),
            vec!["Diterpenoids", "Monoterpenoids", "Triterpenoids"]
        );
        assert_eq!(p.subclasses.iter().map(|b| b.count).sum::<usize>(), 5);
        assert!((p.subclasses.iter().map(|b| b.share).sum::<f64>() - 1.0).abs() < 1e-12);
        let l = &p.overall.lipinski;
        assert_eq!(l.evaluated, 4);
        assert_eq!(l.skipped, 1);
        assert_eq!(l.histogram, [2, 1, 0, 0, 1]);
        assert_eq!(l.hba_compliant_share, Some(3.0 / 5.0));
        assert_eq!(l.hbd_compliant_share, Some(3.0 / 4.0));
        let logp = &p.overall.descriptors[1];
        assert_eq!(logp.summary.max, Some(50.2));
        assert_eq!(logp.clipped.as_ref().unwrap().suppressed, 1);
        let table = render_table(&p);
        assert_eq!(table.lines().count(), 5);
        let mut csv = Vec::new();
        write_histograms_csv(&p, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("subclass,descriptor"));
    }

    #[test]
    fn empty_profile_rejected() {
        assert!(subclass_profile(&RecordSet::default(), &ProfileConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn infinite_clip_is_no_clip(v in prop::collection::vec(prop::option::of(-1e4f64..1e4), 0..50), bins in 1usize..20) {
            let a = summarize(&v, None, bins).unwrap();
            let mut b = summarize(&v, Some((f64::NEG_INFINITY, f64::INFINITY)), bins).unwrap();
            b.clip = None;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn summary_invariants(v in prop::collection::vec(prop::option::of(-1e4f64..1e4), 1..50), lo in -1e4f64..0.0, bins in 1usize..20) {
            let s = summarize(&v, Some((lo, lo + 5e3)), bins).unwrap();
            prop_assert_eq!(s.histogram.counts.iter().sum::<usize>(), s.count);
            prop_assert!((0.0..=1.0).contains(&s.suppressed_fraction));
            if !s.empty {
                prop_assert!(s.min.unwrap() <= s.mean.unwrap() && s.mean.unwrap() <= s.max.unwrap());
            }
        }

        #[test]
        fn violations_monotone(mw in 0f64..1000.0, lp in -10f64..20.0, hbd in 0f64..20.0, hba in 0f64..20.0, bump in 0f64..100.0, which in 0usize..4) {
            let x = LipinskiInputs { molecular_weight: mw, log_p: lp, hbd, hba };
            let mut y = x;
            match which {
                0 => y.molecular_weight += bump,
                1 => y.log_p += bump,
                2 => y.hbd += bump,
                _ => y.hba += bump,
            }
            prop_assert!(lipinski_violations(&y) >= lipinski_violations(&x));
        }
    }
}
