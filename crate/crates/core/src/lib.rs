//! Multispectral land-cover toolkit for Landsat 5 TM style imagery.
//!
//! * [`raster`]: image and label rasters, band-sequential file format, TM band table
//! * [`scene`]: seeded synthetic scenes with ground truth
//! * [`indices`]: band-ratio and vegetation indices, water and vegetation masks
//! * [`band_selection`]: band statistics, correlation and OIF ranking
//! * [`classifiers`]: parallelepiped and minimum-distance classification
//! * [`accuracy`]: confusion matrices, overall accuracy, kappa
//! * [`landcover`]: object to band-combination recommendations

pub mod accuracy;
pub mod band_selection;
pub mod classifiers;
pub mod indices;
pub mod landcover;
pub mod raster;
pub mod scene;

pub use accuracy::{accuracy_report, compare_methods, confusion_matrix, AccuracyReport, ConfusionMatrix};
pub use band_selection::{rank_combinations, rank_from_table, BandCombo, OifRanking, SortOrder};
pub use classifiers::{ClassSignature, ClassifierConfig, TrainingSet};
pub use indices::{compute_index_raster, evaluate_index_pixel, IndexKind, IndexRaster};
pub use landcover::{band_prevalence, recommend, LandcoverObject};
pub use raster::{read_raster, write_raster, LabelRaster, MultibandImage};
pub use scene::{generate_scene, SceneClass, SceneSpec};
