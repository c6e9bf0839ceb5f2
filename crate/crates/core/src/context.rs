//! Correction of cell labels by the label of the enclosing region.

use crate::cellfeat::CellClass;
use crate::error::Error;
use crate::superpix::RegionClass;
use crate::svmkit::ClassProbabilities;

/// A cell's class ranking (best first) and the class of its region.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteInput {
    pub ranking: [CellClass; 4],
    pub region: RegionClass,
}

impl VoteInput {
    /// Ranking from probabilities over `CellClass::ALL`, ties by class order.
    pub fn from_probabilities(p: &ClassProbabilities, region: RegionClass) -> Self {
        let r = p.ranking();
        let ranking = std::array::from_fn(|i| CellClass::from_index(r[i]).expect("four cell classes"));
        VoteInput { ranking, region }
    }
}

/// Cell class admitted by a region, if the rule applies to that region.
pub fn admitted_class(region: RegionClass) -> Option<CellClass> {
    match region {
        RegionClass::Tumour => Some(CellClass::Cancer),
        RegionClass::Stroma => Some(CellClass::Stromal),
        RegionClass::Epidermis => Some(CellClass::Epidermis),
        RegionClass::Lumen => None,
    }
}

/// Epidermis regions force Epidermis. In tumour and stroma regions the
/// first ranked class that is either the region's own cell class or
/// Lymphocyte wins. Lumen regions keep the top class.
pub fn vote(input: &VoteInput) -> CellClass {
    let top = input.ranking[0];
    let Some(own) = admitted_class(input.region) else {
        return top;
    };
    if own == CellClass::Epidermis {
        return CellClass::Epidermis;
    }
    *input
        .ranking
        .iter()
        .find(|&&c| c == own || c == CellClass::Lymphocyte)
        .expect("ranking holds every class")
}

/// Votes each cell. Cells without a region keep their top class and are
/// reported as `MissingContext`.
pub fn vote_all(cells: &[ClassProbabilities], regions: &[Option<RegionClass>]) -> (Vec<CellClass>, Vec<Error>) {
    let mut missing = Vec::new();
    let labels = cells
        .iter()
        .zip(regions)
        .enumerate()
        .map(|(i, (p, r))| match r {
            Some(region) => vote(&VoteInput::from_probabilities(p, *region)),
            None => {
                missing.push(Error::MissingContext { cell: i });
                CellClass::from_index(p.argmax()).expect("four cell classes")
            }
        })
        .collect();
    (labels, missing)
}
