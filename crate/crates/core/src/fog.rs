//! Closed-form delay and smartphone energy of the health-reporting pipeline,
//! for a fog deployment and for a cloud-only baseline.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FOG_HEADER: &str = "# mobikg-fog v1";
pub const SWEEP_COLUMNS: [&str; 7] = [
    "payload_bits",
    "fog_delay_s",
    "cloud_delay_s",
    "delay_reduction_pct",
    "fog_energy_j",
    "cloud_energy_j",
    "power_reduction_pct",
];

#[derive(Debug, Error)]
pub enum FogError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cloud-only total is zero; reduction undefined")]
    ZeroBaseline,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing key {0:?}")]
    MissingKey(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One transfer. `phone` marks the smartphone's own links (the `k` uplinks
/// and `q` downlinks); the rest are relayed while the phone idles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub bits: f64,
    pub rate_bps: f64,
    pub failure: f64,
    pub phone: bool,
}

impl Link {
    /// Expected transfer time including the retry fraction.
    pub fn time_s(&self) -> f64 {
        (1.0 + self.failure) * (self.bits / self.rate_bps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Processing {
    pub bits: f64,
    pub speed_bps: f64,
}

impl Processing {
    pub fn time_s(&self) -> f64 {
        self.bits / self.speed_bps
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerStates {
    pub transmit_w: f64,
    pub receive_w: f64,
    pub active_w: f64,
    pub idle_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FogScenario {
    pub delay_mob: f64,
    pub delay_h: f64,
    pub delay_c: f64,
    pub uplinks: Vec<Link>,
    pub downlinks: Vec<Link>,
    pub mobile: Processing,
    pub fog: Processing,
    pub cloud: Processing,
    pub power: PowerStates,
}

/// Per-phase split; `total` is always `ca + com + pro`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub ca: f64,
    pub com: f64,
    pub pro: f64,
    pub total: f64,
}

impl Breakdown {
    fn new(ca: f64, com: f64, pro: f64) -> Self {
        Self { ca, com, pro, total: ca + com + pro }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub delay_reduction_pct: f64,
    pub power_reduction_pct: f64,
}

fn nonneg(name: &str, v: f64) -> Result<(), FogError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(FogError::Invalid(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), FogError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(FogError::Invalid(format!("{name} must be > 0, got {v}")))
    }
}

impl FogScenario {
    pub fn validate(&self) -> Result<(), FogError> {
        nonneg("delay_mob", self.delay_mob)?;
        nonneg("delay_h", self.delay_h)?;
        nonneg("delay_c", self.delay_c)?;
        for (kind, links) in [("uplink", &self.uplinks), ("downlink", &self.downlinks)] {
            for (i, l) in links.iter().enumerate() {
                nonneg(&format!("{kind}.{i} bits"), l.bits)?;
                positive(&format!("{kind}.{i} rate"), l.rate_bps)?;
                nonneg(&format!("{kind}.{i} failure"), l.failure)?;
            }
        }
        for (name, p) in [("mobile", self.mobile), ("fog", self.fog), ("cloud", self.cloud)] {
            nonneg(&format!("{name} bits"), p.bits)?;
            positive(&format!("{name} speed"), p.speed_bps)?;
        }
        let pw = self.power;
        for (name, v) in [("p_t", pw.transmit_w), ("p_r", pw.receive_w), ("p_a", pw.active_w), ("p_i", pw.idle_w)] {
            nonneg(name, v)?;
        }
        Ok(())
    }

    /// Smartphone uplink count `k`.
    pub fn k(&self) -> usize {
        self.uplinks.iter().filter(|l| l.phone).count()
    }

    /// Smartphone downlink count `q`.
    pub fn q(&self) -> usize {
        self.downlinks.iter().filter(|l| l.phone).count()
    }

    /// Every data amount multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        for l in s.uplinks.iter_mut().chain(s.downlinks.iter_mut()) {
            l.bits *= factor;
        }
        s.mobile.bits *= factor;
        s.fog.bits *= factor;
        s.cloud.bits *= factor;
        s
    }

    /// The same pipeline without a fog tier: fog processing moves to the
    /// cloud and the given WAN links replace the current ones.
    pub fn cloud_only(&self, uplinks: Vec<Link>, downlinks: Vec<Link>) -> Self {
        let mut s = self.clone();
        s.cloud.bits += s.fog.bits;
        s.fog.bits = 0.0;
        s.uplinks = uplinks;
        s.downlinks = downlinks;
        s
    }
}

pub fn delay_total(s: &FogScenario) -> Result<Breakdown, FogError> {
    s.validate()?;
    let ca = s.delay_mob + s.delay_h.max(s.delay_c);
    let com: f64 = s.uplinks.iter().chain(&s.downlinks).map(Link::time_s).sum();
    let pro = s.mobile.time_s() + s.fog.time_s() + s.cloud.time_s();
    Ok(Breakdown::new(ca, com, pro))
}

/// Smartphone energy in joules: transmit/receive power on its own links,
/// idle power while other links run, active power for on-device work.
pub fn power_total(s: &FogScenario) -> Result<Breakdown, FogError> {
    s.validate()?;
    let p = s.power;
    let ca = p.active_w * s.delay_mob + p.receive_w * s.delay_h.max(s.delay_c);
    let sum = |links: &[Link], phone: bool| -> f64 { links.iter().filter(|l| l.phone == phone).map(Link::time_s).sum() };
    let com = p.transmit_w * sum(&s.uplinks, true)
        + p.receive_w * sum(&s.downlinks, true)
        + p.idle_w * sum(&s.uplinks, false)
        + p.idle_w * sum(&s.downlinks, false);
    let pro = p.active_w * s.mobile.time_s() + p.idle_w * s.fog.time_s() + p.idle_w * s.cloud.time_s();
    Ok(Breakdown::new(ca, com, pro))
}

fn reduction(cloud: f64, fog: f64) -> Result<f64, FogError> {
    if cloud == 0.0 {
        return Err(FogError::ZeroBaseline);
    }
    Ok(100.0 * (cloud - fog) / cloud)
}

pub fn compare_architectures(fog: &FogScenario, cloud_only: &FogScenario) -> Result<Comparison, FogError> {
    let (fd, cd) = (delay_total(fog)?.total, delay_total(cloud_only)?.total);
    let (fp, cp) = (power_total(fog)?.total, power_total(cloud_only)?.total);
    Ok(Comparison { delay_reduction_pct: reduction(cd, fd)?, power_reduction_pct: reduction(cp, fp)? })
}

/// A fog/cloud scenario pair described at a nominal payload, plus the
/// payloads to sweep. Sweeping rescales all data amounts linearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FogModel {
    pub payload_bits: f64,
    pub sweep_bits: Vec<f64>,
    pub fog: FogScenario,
    pub cloud: FogScenario,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub payload_bits: f64,
    pub fog_delay_s: f64,
    pub cloud_delay_s: f64,
    pub delay_reduction_pct: f64,
    pub fog_energy_j: f64,
    pub cloud_energy_j: f64,
    pub power_reduction_pct: f64,
}

impl FogModel {
    pub fn at_payload(&self, bits: f64) -> (FogScenario, FogScenario) {
        let f = bits / self.payload_bits;
        (self.fog.scaled(f), self.cloud.scaled(f))
    }

    pub fn sweep(&self) -> Result<Vec<SweepRow>, FogError> {
        positive("payload_bits", self.payload_bits)?;
        self.sweep_bits
            .iter()
            .map(|&bits| {
                positive("sweep payload", bits)?;
                let (fog, cloud) = self.at_payload(bits);
                let (fd, cd) = (delay_total(&fog)?.total, delay_total(&cloud)?.total);
                let (fp, cp) = (power_total(&fog)?.total, power_total(&cloud)?.total);
                Ok(SweepRow {
                    payload_bits: bits,
                    fog_delay_s: fd,
                    cloud_delay_s: cd,
                    delay_reduction_pct: reduction(cd, fd)?,
                    fog_energy_j: fp,
                    cloud_energy_j: cp,
                    power_reduction_pct: reduction(cp, fp)?,
                })
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self, FogError> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == FOG_HEADER => {}
            _ => return Err(FogError::Parse { line: 1, msg: format!("expected header {FOG_HEADER:?}") }),
        }
        for (i, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FogError::Parse { line: i + 1, msg: "expected key = value".into() })?;
            if kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(FogError::Parse { line: i + 1, msg: format!("duplicate key {:?}", k.trim()) });
            }
        }
        let num = |key: &str| -> Result<f64, FogError> {
            let (line, v) = kv.get(key).ok_or_else(|| FogError::MissingKey(key.to_string()))?;
            v.parse().map_err(|_| FogError::Parse { line: *line, msg: format!("{key}: not a number") })
        };
        let links = |prefix: &str| -> Result<Vec<Link>, FogError> {
            let mut out = Vec::new();
            while let Some((line, v)) = kv.get(&format!("{prefix}.{}", out.len())) {
                let bad = |m: &str| FogError::Parse { line: *line, msg: m.to_string() };
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 4 {
                    return Err(bad("link needs: bits rate_bps failure phone|relay"));
                }
                let f = |s: &str| s.parse::<f64>().map_err(|_| bad("link value is not a number"));
                let phone = match parts[3] {
                    "phone" => true,
                    "relay" => false,
                    _ => return Err(bad("link owner must be phone or relay")),
                };
                out.push(Link { bits: f(parts[0])?, rate_bps: f(parts[1])?, failure: f(parts[2])?, phone });
            }
            Ok(out)
        };
        let scenario = |p: &str| -> Result<FogScenario, FogError> {
            let s = FogScenario {
                delay_mob: num(&format!("{p}.delay_mob"))?,
                delay_h: num(&format!("{p}.delay_h"))?,
                delay_c: num(&format!("{p}.delay_c"))?,
                uplinks: links(&format!("{p}.uplink"))?,
                downlinks: links(&format!("{p}.downlink"))?,
                mobile: Processing { bits: num(&format!("{p}.d_mob"))?, speed_bps: num(&format!("{p}.s_mob"))? },
                fog: Processing { bits: num(&format!("{p}.d_f"))?, speed_bps: num(&format!("{p}.s_f"))? },
                cloud: Processing { bits: num(&format!("{p}.d_c"))?, speed_bps: num(&format!("{p}.s_c"))? },
                power: PowerStates {
                    transmit_w: num(&format!("{p}.p_t"))?,
                    receive_w: num(&format!("{p}.p_r"))?,
                    active_w: num(&format!("{p}.p_a"))?,
                    idle_w: num(&format!("{p}.p_i"))?,
                },
            };
            s.validate()?;
            Ok(s)
        };
        let sweep_bits = match kv.get("sweep_bits") {
            None => Vec::new(),
            Some((line, v)) => v
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| FogError::Parse { line: *line, msg: "sweep_bits: not a number".into() }))
                .collect::<Result<_, _>>()?,
        };
        let model = Self { payload_bits: num("payload_bits")?, sweep_bits, fog: scenario("fog")?, cloud: scenario("cloud")? };
        if model.cloud.fog.bits != 0.0 {
            return Err(FogError::Invalid("cloud-only scenario must have d_f = 0".into()));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, FogError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{FOG_HEADER}\npayload_bits = {}\n", self.payload_bits);
        if !self.sweep_bits.is_empty() {
            let v: Vec<String> = self.sweep_bits.iter().map(f64::to_string).collect();
            out += &format!("sweep_bits = {}\n", v.join(" "));
        }
        for (p, s) in [("fog", &self.fog), ("cloud", &self.cloud)] {
            out += &format!("{p}.delay_mob = {}\n{p}.delay_h = {}\n{p}.delay_c = {}\n", s.delay_mob, s.delay_h, s.delay_c);
            for (kind, links) in [("uplink", &s.uplinks), ("downlink", &s.downlinks)] {
                for (i, l) in links.iter().enumerate() {
                    let who = if l.phone { "phone" } else { "relay" };
                    out += &format!("{p}.{kind}.{i} = {} {} {} {who}\n", l.bits, l.rate_bps, l.failure);
                }
            }
            for (k, pr) in [("mob", s.mobile), ("f", s.fog), ("c", s.cloud)] {
                out += &format!("{p}.d_{k} = {}\n{p}.s_{k} = {}\n", pr.bits, pr.speed_bps);
            }
            let pw = s.power;
            out += &format!(
                "{p}.p_t = {}\n{p}.p_r = {}\n{p}.p_a = {}\n{p}.p_i = {}\n",
                pw.transmit_w, pw.receive_w, pw.active_w, pw.idle_w
            );
        }
        out
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<(), FogError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        wr.write_record([
            r.payload_bits,
            r.fog_delay_s,
            r.cloud_delay_s,
            r.delay_reduction_pct,
            r.fog_energy_j,
            r.cloud_energy_j,
            r.power_reduction_pct,
        ]
        .map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Reference LTE smartphone plus LAN fog node parameters shipped with the
/// crate.
pub const REFERENCE_MODEL: &str = include_str!("../data/fog_reference.txt");

pub fn reference_model() -> FogModel {
    FogModel::parse(REFERENCE_MODEL).expect("bundled reference model parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_scenario() -> FogScenario {
        FogScenario {
            delay_mob: 0.0,
            delay_h: 0.0,
            delay_c: 0.0,
            uplinks: vec![Link { bits: 0.0, rate_bps: 1.0, failure: 0.0, phone: true }],
            downlinks: vec![Link { bits: 0.0, rate_bps: 1.0, failure: 0.0, phone: false }],
            mobile: Processing { bits: 0.0, speed_bps: 1.0 },
            fog: Processing { bits: 0.0, speed_bps: 1.0 },
            cloud: Processing { bits: 0.0, speed_bps: 1.0 },
            power: PowerStates::default(),
        }
    }

    #[test]
    fn zero_inputs_give_zero_totals() {
        let s = zero_scenario();
        assert_eq!(delay_total(&s).unwrap().total, 0.0);
        assert_eq!(power_total(&s).unwrap().total, 0.0);
    }

    #[test]
    fn collection_delay_takes_the_slower_source() {
        let s = FogScenario { delay_mob: 0.1, delay_h: 0.5, delay_c: 0.3, ..zero_scenario() };
        assert!((delay_total(&s).unwrap().ca - 0.6).abs() < 1e-15);
    }

    #[test]
    fn one_uplink_with_retries() {
        let s = FogScenario {
            delay_mob: 0.1,
            delay_h: 0.5,
            delay_c: 0.3,
            uplinks: vec![Link { bits: 1e7, rate_bps: 1e7, failure: 0.1, phone: true }],
            downlinks: vec![],
            ..zero_scenario()
        };
        let d = delay_total(&s).unwrap();
        assert!((d.com - 1.1).abs() < 1e-12);
        assert!((d.total - (1.1 + d.ca)).abs() < 1e-12);
    }

    #[test]
    fn collection_energy_example() {
        let s = FogScenario {
            delay_mob: 0.1,
            delay_h: 0.5,
            delay_c: 0.3,
            power: PowerStates { transmit_w: 0.0, receive_w: 0.8, active_w: 1.0, idle_w: 0.0 },
            ..zero_scenario()
        };
        assert!((power_total(&s).unwrap().ca - 0.5).abs() < 1e-12);
        let s = FogScenario { power: PowerStates::default(), ..reference_model().fog };
        assert_eq!(power_total(&s).unwrap().total, 0.0);
    }

    #[test]
    fn phone_only_links_pay_no_idle_power() {
        let mut s = reference_model().fog;
        for l in s.uplinks.iter_mut().chain(s.downlinks.iter_mut()) {
            l.phone = true;
        }
        let base = power_total(&s).unwrap().com;
        s.power.idle_w *= 7.0;
        assert_eq!(power_total(&s).unwrap().com, base);
    }

    #[test]
    fn zero_rate_or_speed_is_rejected() {
        let mut s = zero_scenario();
        s.uplinks[0].rate_bps = 0.0;
        assert!(matches!(delay_total(&s), Err(FogError::Invalid(_))));
        let mut s = zero_scenario();
        s.cloud.speed_bps = 0.0;
        assert!(power_total(&s).is_err());
        let mut s = zero_scenario();
        s.downlinks[0].failure = -0.1;
        assert!(delay_total(&s).is_err());
    }

    #[test]
    fn identical_scenarios_compare_to_zero() {
        let s = reference_model().fog;
        let c = compare_architectures(&s, &s).unwrap();
        assert_eq!(c.delay_reduction_pct, 0.0);
        assert_eq!(c.power_reduction_pct, 0.0);
        assert!(matches!(compare_architectures(&s, &zero_scenario()), Err(FogError::ZeroBaseline)));
    }

    #[test]
    fn cloud_only_moves_fog_work_to_the_cloud() {
        let m = reference_model();
        let c = m.fog.cloud_only(m.cloud.uplinks.clone(), m.cloud.downlinks.clone());
        assert_eq!(c.fog.bits, 0.0);
        assert_eq!(c.cloud.bits, m.fog.cloud.bits + m.fog.fog.bits);
    }

    #[test]
    fn file_format_round_trips_and_reports_lines() {
        let m = reference_model();
        let again = FogModel::parse(&m.to_text()).unwrap();
        assert_eq!(m, again);
        assert_eq!(again.to_text(), m.to_text());
        let bad = m.to_text().replace("fog.delay_h = 0.35", "fog.delay_h = fast");
        match FogModel::parse(&bad) {
            Err(FogError::Parse { line, .. }) => assert_eq!(bad.lines().nth(line - 1).unwrap(), "fog.delay_h = fast"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(FogModel::parse("payload_bits = 1"), Err(FogError::Parse { line: 1, .. })));
        let missing = m.to_text().replace("cloud.p_i", "cloud.p_x");
        assert!(matches!(FogModel::parse(&missing), Err(FogError::MissingKey(k)) if k == "cloud.p_i"));
    }

    fn arb_link() -> impl Strategy<Value = Link> {
        (0.0..1e8f64, 1e5..1e9f64, 0.0..0.5f64, any::<bool>())
            .prop_map(|(bits, rate_bps, failure, phone)| Link { bits, rate_bps, failure, phone })
    }

    fn arb_scenario() -> impl Strategy<Value = FogScenario> {
        (
            (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64),
            prop::collection::vec(arb_link(), 1..4),
            prop::collection::vec(arb_link(), 0..4),
            prop::collection::vec((0.0..1e8f64, 1e6..1e10f64), 3),
            (0.0..3.0f64, 0.0..3.0f64, 0.0..3.0f64, 0.0..1.0f64),
        )
            .prop_map(|((dm, dh, dc), up, down, pro, (pt, pr, pa, pi))| FogScenario {
                delay_mob: dm,
                delay_h: dh,
                delay_c: dc,
                uplinks: up,
                downlinks: down,
                mobile: Processing { bits: pro[0].0, speed_bps: pro[0].1 },
                fog: Processing { bits: pro[1].0, speed_bps: pro[1].1 },
                cloud: Processing { bits: pro[2].0, speed_bps: pro[2].1 },
                power: PowerStates { transmit_w: pt, receive_w: pr, active_w: pa, idle_w: pi },
            })
    }

    proptest! {
        #[test]
        fn totals_are_sums_of_phases(s in arb_scenario()) {
            for b in [delay_total(&s).unwrap(), power_total(&s).unwrap()] {
                prop_assert_eq!(b.total, b.ca + b.com + b.pro);
            }
        }

        #[test]
        fn doubling_one_uplink_doubles_its_term(s in arb_scenario(), i in 0usize..3) {
            let i = i % s.uplinks.len();
            let term = s.uplinks[i].time_s();
            let mut t = s.clone();
            t.uplinks[i].bits *= 2.0;
            let d = delay_total(&t).unwrap().com - delay_total(&s).unwrap().com;
            prop_assert!((d - term).abs() <= 1e-12 * (1.0 + term.abs() + delay_total(&s).unwrap().com));
            let mut t = s.clone();
            t.uplinks[i].rate_bps *= 2.0;
            let d = delay_total(&s).unwrap().com - delay_total(&t).unwrap().com;
            prop_assert!((d - term / 2.0).abs() <= 1e-12 * (1.0 + delay_total(&s).unwrap().com));
        }

        #[test]
        fn dominated_fog_never_reduces(s in arb_scenario(), extra in 0.0..1.0f64) {
            let mut worse = s.clone();
            worse.delay_mob += extra;
            worse.mobile.bits += extra * 1e6;
            if delay_total(&s).unwrap().total > 0.0 && power_total(&s).unwrap().total > 0.0 {
                let c = compare_architectures(&worse, &s).unwrap();
                prop_assert!(c.delay_reduction_pct <= 0.0);
                prop_assert!(c.power_reduction_pct <= 0.0);
            }
        }

        #[test]
        fn reductions_are_antisymmetric(a in arb_scenario(), b in arb_scenario()) {
            let (da, db) = (delay_total(&a).unwrap().total, delay_total(&b).unwrap().total);
            prop_assume!(da > 1e-6 && db > 1e-6);
            let ab = compare_architectures(&a, &b).unwrap().delay_reduction_pct;
            let ba = compare_architectures(&b, &a).unwrap().delay_reduction_pct;
            let expect = -ba / (1.0 - ba / 100.0);
            prop_assert!((ab - expect).abs() <= 1e-9 * (1.0 + ab.abs()));
        }
    }
}
