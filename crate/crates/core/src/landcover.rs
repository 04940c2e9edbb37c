//! Land-cover object to band-combination recommendations for Landsat 5 TM.
//!
//! The table is static. Each row carries the literature statement it was
//! taken from in `source`.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use crate::indices::{IndexKind, DEFAULT_SAVI_L};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LandcoverObject {
    Water,
    CoastalBoundary,
    Vegetation,
    CropAnalysis,
    Soil,
    SoilSalinity,
    SoilMoisture,
    SnowIce,
    UnderwaterFeatures,
    ChangeDetection,
}

impl LandcoverObject {
    pub const ALL: [LandcoverObject; 10] = [
        LandcoverObject::Water,
        LandcoverObject::CoastalBoundary,
        LandcoverObject::Vegetation,
        LandcoverObject::CropAnalysis,
        LandcoverObject::Soil,
        LandcoverObject::SoilSalinity,
        LandcoverObject::SoilMoisture,
        LandcoverObject::SnowIce,
        LandcoverObject::UnderwaterFeatures,
        LandcoverObject::ChangeDetection,
    ];

    pub fn name(&self) -> &'static str {
        use LandcoverObject::*;
        match self {
            Water => "water",
            CoastalBoundary => "coastal-boundary",
            Vegetation => "vegetation",
            CropAnalysis => "crop-analysis",
            Soil => "soil",
            SoilSalinity => "soil-salinity",
            SoilMoisture => "soil-moisture",
            SnowIce => "snow-ice",
            UnderwaterFeatures => "underwater-features",
            ChangeDetection => "change-detection",
        }
    }
}

impl fmt::Display for LandcoverObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LandcoverObject {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        LandcoverObject::ALL
            .into_iter()
            .find(|o| o.name() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = LandcoverObject::ALL.iter().map(|o| o.name()).collect();
                format!("unknown object `{s}`; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub object: LandcoverObject,
    /// Band sets, each sorted ascending.
    pub combos: Vec<Vec<u8>>,
    pub indices: Vec<IndexKind>,
    pub source: &'static str,
}

pub fn recommend(object: LandcoverObject) -> Recommendation {
    use IndexKind::*;
    use LandcoverObject::*;
    let (combos, indices, source): (&[&[u8]], Vec<IndexKind>, &'static str) = match object {
        Water => (
            &[&[2, 5]],
            vec![WaterRatio25, WaterRatio42, WaterIndex],
            "ratio band2/band5 greater than one for water; band 4 / band 2 ratio; \
             Water Index = (Band 1 + Band 2 + Band 3) / (Band 4 + Band 5 + Band 7)",
        ),
        CoastalBoundary => (
            &[&[3, 4, 7]],
            vec![],
            "bands 3, 4, 7 is good for detecting the water boundary or costal",
        ),
        Vegetation => (
            &[&[3, 4]],
            vec![
                Ndvi,
                CorrectedNdvi,
                PercentVegCover,
                SimpleRatio,
                ReducedSimpleRatio,
                Savi(DEFAULT_SAVI_L),
            ],
            "combination of band4 and band3",
        ),
        CropAnalysis => (
            &[&[2, 3, 4]],
            vec![],
            "Bands 4,3, 2 are used for vegetation and crop analysis",
        ),
        Soil => (&[&[2, 3, 4]], vec![SoilEcRatio], "(TM3 - TM4) / (TM2 - TM4)"),
        SoilSalinity => (&[&[2, 4, 6, 7]], vec![], "bands (2,4,6) and 7"),
        SoilMoisture => (
            &[&[3, 4, 5], &[3, 4, 7]],
            vec![],
            "bands 4, 5, 3 for soil moisture; bands 3, 4, 7 for soil moisture",
        ),
        SnowIce => (
            &[&[3, 4, 5]],
            vec![IceRatio45, IceRatio35],
            "combination of bands 3, 4 and 5",
        ),
        UnderwaterFeatures => (
            &[&[1, 2, 3]],
            vec![],
            "bands 3, 2, 1 for landcover and underwater features",
        ),
        ChangeDetection => (
            &[&[3, 4, 7], &[2, 4, 7]],
            vec![],
            "bands 7, 4, 3 and bands 7, 4, 2 for change detection",
        ),
    };
    Recommendation {
        object,
        combos: combos.iter().map(|c| c.to_vec()).collect(),
        indices,
        source,
    }
}

pub fn all_recommendations() -> Vec<Recommendation> {
    LandcoverObject::ALL.into_iter().map(recommend).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPrevalence {
    /// Number of recommended combinations containing each band 1..=7.
    pub counts: BTreeMap<u8, usize>,
    pub total_combos: usize,
}

impl BandPrevalence {
    pub fn fraction(&self, band: u8) -> f64 {
        self.counts.get(&band).copied().unwrap_or(0) as f64 / self.total_combos as f64
    }

    /// The band with the highest count, if it is unique.
    pub fn unique_max(&self) -> Option<u8> {
        let max = *self.counts.values().max()?;
        let mut top = self.counts.iter().filter(|(_, &c)| c == max);
        let (&band, _) = top.next()?;
        top.next().is_none().then_some(band)
    }
}

pub fn band_prevalence() -> BandPrevalence {
    let recs = all_recommendations();
    let mut counts: BTreeMap<u8, usize> = (1..=7).map(|b| (b, 0)).collect();
    let mut total_combos = 0;
    for combo in recs.iter().flat_map(|r| &r.combos) {
        total_combos += 1;
        for b in combo {
            *counts.entry(*b).or_default() += 1;
        }
    }
    BandPrevalence { counts, total_combos }
}

fn combo_text(c: &[u8], sep: &str) -> String {
    c.iter().map(u8::to_string).collect::<Vec<_>>().join(sep)
}

impl Recommendation {
    pub fn to_text(&self) -> String {
        let combos: Vec<String> = self
            .combos
            .iter()
            .map(|c| format!("{{{}}}", combo_text(c, ",")))
            .collect();
        let indices: Vec<String> = self.indices.iter().map(ToString::to_string).collect();
        let mut s = format!("object: {}\nbands: {}\n", self.object, combos.join(" "));
        if !indices.is_empty() {
            s.push_str(&format!("indices: {}\n", indices.join(", ")));
        }
        s.push_str(&format!("source: \"{}\"\n", self.source));
        s
    }
}

/// `object,combos,indices,source` rows. Combos are space-separated digit
/// strings and indices are `;`-separated kind names.
pub fn write_recommendations_csv<W: io::Write>(recs: &[Recommendation], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["object", "combos", "indices", "source"])?;
    for r in recs {
        let combos: Vec<String> = r.combos.iter().map(|c| combo_text(c, "")).collect();
        let indices: Vec<String> = r.indices.iter().map(ToString::to_string).collect();
        w.write_record([r.object.name(), &combos.join(" "), &indices.join(";"), r.source])?;
    }
    w.flush()?;
    Ok(())
}
