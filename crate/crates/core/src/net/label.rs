use serde::{Deserialize, Serialize};

use crate::geo::LatLon;

/// Case-density class of a region. `None` covers counts that fall between
/// the four defined classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HotspotClass {
    C1,
    C2,
    C3,
    C4,
    None,
}

impl HotspotClass {
    pub const ALL: [HotspotClass; 5] =
        [HotspotClass::C1, HotspotClass::C2, HotspotClass::C3, HotspotClass::C4, HotspotClass::None];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<HotspotClass> {
        Self::ALL.get(i).copied()
    }

    pub fn is_hotspot(self) -> bool {
        matches!(self, HotspotClass::C1 | HotspotClass::C2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HotspotClass::C1 => "C1",
            HotspotClass::C2 => "C2",
            HotspotClass::C3 => "C3",
            HotspotClass::C4 => "C4",
            HotspotClass::None => "NONE",
        }
    }
}

impl std::fmt::Display for HotspotClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HotspotClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.iter().copied().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown class {s:?}"))
    }
}

/// A geocoded batch of confirmed cases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoCase {
    pub location: LatLon,
    pub count: u32,
}

/// Cases within `radius_m` of `center`, boundary included.
pub fn cases_within(cases: &[GeoCase], center: &LatLon, radius_m: f64) -> u64 {
    cases.iter().filter(|c| c.location.haversine_m(center) <= radius_m).map(|c| c.count as u64).sum()
}

/// Classes checked in order C1, C2, C3, C4; the first match wins.
///
/// | class | rule                     |
/// |-------|--------------------------|
/// | C1    | more than 20 within 500 m |
/// | C2    | more than 50 within 1 km  |
/// | C3    | fewer than 5 within 1 km  |
/// | C4    | fewer than 10 within 2 km |
pub fn label_region(cases: &[GeoCase], center: &LatLon) -> HotspotClass {
    let r500 = cases_within(cases, center, 500.0);
    let r1k = cases_within(cases, center, 1000.0);
    let r2k = cases_within(cases, center, 2000.0);
    if r500 > 20 {
        HotspotClass::C1
    } else if r1k > 50 {
        HotspotClass::C2
    } else if r1k < 5 {
        HotspotClass::C3
    } else if r2k < 10 {
        HotspotClass::C4
    } else {
        HotspotClass::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn center() -> LatLon {
        LatLon::new(22.57, 88.36)
    }

    fn at(north: f64, n: u32) -> GeoCase {
        GeoCase { location: center().offset_m(north, 0.0), count: n }
    }

    #[test]
    fn twenty_five_close_is_c1() {
        let c = label_region(&[at(100.0, 25)], &center());
        assert_eq!(c, HotspotClass::C1);
        assert!(c.is_hotspot());
    }

    #[test]
    fn sparse_is_c3() {
        assert_eq!(label_region(&[at(800.0, 3)], &center()), HotspotClass::C3);
    }

    #[test]
    fn c2_needs_more_than_fifty_in_a_kilometre() {
        assert_eq!(label_region(&[at(100.0, 20), at(800.0, 31)], &center()), HotspotClass::C2);
        assert_eq!(label_region(&[at(100.0, 20), at(800.0, 30)], &center()), HotspotClass::None);
    }

    #[test]
    fn c4_is_quiet_but_not_empty() {
        assert_eq!(label_region(&[at(900.0, 6), at(1500.0, 3)], &center()), HotspotClass::C4);
    }

    #[test]
    fn definition_gap_is_none() {
        let cases = [at(100.0, 15), at(1500.0, 3)];
        assert_eq!(cases_within(&cases, &center(), 500.0), 15);
        assert_eq!(cases_within(&cases, &center(), 1000.0), 15);
        assert_eq!(cases_within(&cases, &center(), 2000.0), 18);
        assert_eq!(label_region(&cases, &center()), HotspotClass::None);
    }

    #[test]
    fn names_round_trip() {
        for c in HotspotClass::ALL {
            assert_eq!(c.as_str().parse::<HotspotClass>().unwrap(), c);
            assert_eq!(HotspotClass::from_index(c.index()), Some(c));
        }
    }

    proptest! {
        #[test]
        fn adding_a_case_keeps_hotspots(raw in prop::collection::vec((0.0f64..2500.0, 1u32..8), 0..30), extra in (0.0f64..2500.0, 1u32..8)) {
            let mut cases: Vec<GeoCase> = raw.iter().map(|(d, n)| at(*d, *n)).collect();
            let before = label_region(&cases, &center());
            cases.push(at(extra.0, extra.1));
            if before.is_hotspot() {
                prop_assert!(label_region(&cases, &center()).is_hotspot());
            }
        }
    }
}
