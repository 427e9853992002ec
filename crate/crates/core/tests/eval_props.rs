mod common;

use bioextract_core::chem::canonicalize_smiles;
use bioextract_core::eval::{
    attribute_errors, detection_ap, iou_thresholds, match_triplets, ErrorSource, GoldBox, GoldMeasurement, GoldRecord,
    GoldStructure, GoldTriplet, MatchConfig, ScoredBox,
};
use bioextract_core::geometry::BBox;
use bioextract_core::join::{join, StructureOrigin, StructureRecord};
use bioextract_core::measure::{normalize, AssayType, Measurement, Modality, Relation, Unit};
use bioextract_core::record::{Detection, Stage, StageStatus};
use common::{dec, finished_record, triplet};
use num_rational::Ratio;
use proptest::prelude::*;

type Gold = Vec<(String, BBox<f64>)>;

/// Brute force: enumerate every injective assignment of predictions to gold
/// boxes and keep those where each prediction holds the best free gold box
/// (free meaning not held by a higher-scored prediction) and leaves no
/// qualifying box unheld. Exactly one assignment must qualify.
fn oracle_ap(pred: &[ScoredBox<f64>], gold: &Gold, t: f64) -> f64 {
    let n = pred.len();
    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| pred[b].score.partial_cmp(&pred[a].score).unwrap());
    let rank: Vec<usize> = (0..n).map(|i| by_score.iter().position(|&j| j == i).unwrap()).collect();
    let choices = gold.len() + 1;
    let mut valid: Vec<Vec<Option<usize>>> = Vec::new();
    for code in 0..choices.pow(n as u32) {
        let mut c = code;
        let a: Vec<Option<usize>> = (0..n)
            .map(|_| {
                let v = c % choices;
                c /= choices;
                (v > 0).then(|| v - 1)
            })
            .collect();
        let held: Vec<usize> = a.iter().flatten().copied().collect();
        if held.len() != held.iter().collect::<std::collections::BTreeSet<_>>().len() {
            continue;
        }
        let consistent = (0..n).all(|i| {
            let free: Vec<usize> = (0..gold.len())
                .filter(|&g| gold[g].0 == pred[i].image)
                .filter(|&g| !(0..n).any(|k| rank[k] < rank[i] && a[k] == Some(g)))
                .collect();
            let iou = |g: usize| pred[i].bbox.iou(&gold[g].1);
            match a[i] {
                Some(g) => {
                    free.contains(&g)
                        && iou(g) >= t
                        && free.iter().all(|&h| iou(h) < iou(g) || (iou(h) == iou(g) && h >= g))
                }
                None => free.iter().all(|&h| iou(h) < t),
            }
        });
        if consistent {
            valid.push(a);
        }
    }
    assert_eq!(valid.len(), 1, "the greedy assignment is unique");
    let a = &valid[0];
    if gold.is_empty() {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let hits: Vec<bool> = by_score.iter().map(|&i| a[i].is_some()).collect();
    let precision_at = |k: usize| hits[..=k].iter().filter(|h| **h).count() as f64 / (k + 1) as f64;
    (0..n).filter(|&k| hits[k]).map(|k| (k..n).map(precision_at).fold(0.0, f64::max)).sum::<f64>() / gold.len() as f64
}

fn arb_box() -> impl Strategy<Value = BBox<f64>> {
    (0u8..8, 0u8..8, 1u8..4, 1u8..4).prop_map(|(x, y, w, h)| {
        let f = |v: u8| v as f64 / 10.0;
        BBox::new(f(x), f(y), f(x + w), f(y + h))
    })
}

fn arb_instance() -> impl Strategy<Value = (Vec<ScoredBox<f64>>, Gold)> {
    let image = prop_oneof![Just("a".to_string()), Just("b".to_string())];
    let gold = prop::collection::vec((image.clone(), arb_box()), 0..=5);
    let pred = prop::collection::vec((image, arb_box()), 0..=5).prop_flat_map(|boxes| {
        let n = boxes.len();
        (Just(boxes), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    });
    (pred, gold).prop_map(|((boxes, scores), gold)| {
        let pred = boxes
            .into_iter()
            .zip(scores)
            .map(|((image, bbox), s)| ScoredBox { image, bbox, score: (s + 1) as f64 / 10.0 })
            .collect();
        (pred, gold)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn ap_matches_brute_force((pred, gold) in arb_instance()) {
        let thresholds = iou_thresholds::<f64>();
        let table = detection_ap(&pred, &gold, &thresholds);
        let mut sum = 0.0;
        for (t, ap) in &table.per_threshold {
            let want = oracle_ap(&pred, &gold, *t);
            prop_assert!((ap - want).abs() < 1e-12, "t={} ap={} oracle={}", t, ap, want);
            sum += want;
        }
        prop_assert!((table.map - sum / 10.0).abs() < 1e-12);
    }
}

const MOLECULES: &[&str] = &[
    "CCO",
    "c1ccccc1O",
    "CC(=O)Nc1ccc(O)cc1",
    "c1ccc2[nH]ccc2c1",
    "N[C@@H](C)C(=O)O",
    "CN1CCN(CC1)c1ccccc1",
    "O=C(O)c1ccccc1",
    "Clc1ccc(Cl)cc1",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "c1ccncc1",
    "OC1CCCCC1",
    "C#Cc1ccccc1",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fault {
    None,
    Missed,
    Misread,
    WrongKey,
    NoMeasurement,
    AliasOnly,
}

fn fault() -> impl Strategy<Value = Fault> {
    prop_oneof![
        Just(Fault::None),
        Just(Fault::Missed),
        Just(Fault::Misread),
        Just(Fault::WrongKey),
        Just(Fault::NoMeasurement),
        Just(Fault::AliasOnly)
    ]
}

fn expected(f: Fault) -> Option<ErrorSource> {
    match f {
        Fault::None => None,
        Fault::Missed => Some(ErrorSource::Detection),
        Fault::Misread => Some(ErrorSource::Ocsr),
        Fault::WrongKey => Some(ErrorSource::Coreference),
        Fault::NoMeasurement => Some(ErrorSource::Measurement),
        Fault::AliasOnly => Some(ErrorSource::Integration),
    }
}

fn measurement(key: &str, nm: &str) -> Measurement {
    Measurement {
        protein: "EGFR".into(),
        ligand_coreference: key.into(),
        assay_type: AssayType::IC50,
        relation: Relation::Eq,
        value: dec(nm),
        unit: Unit::NanoMolar,
        modality: Modality::Table,
        provenance: vec![],
        uncertainty: None,
        range: None,
    }
}

/// Builds a document with one triplet per fault and a record that suffers
/// exactly those faults. The record's triplets come from the real join.
fn scenario(faults: &[Fault]) -> (bioextract_core::record::ExtractionRecord, GoldRecord) {
    let mut gold = GoldRecord { doc_id: "doc".into(), ..GoldRecord::default() };
    let mut record = finished_record("doc");
    for (i, &f) in faults.iter().enumerate() {
        let smiles = canonicalize_smiles(MOLECULES[i]).unwrap();
        let key = format!("{}", i + 1);
        let alias = format!("X-{}", i + 1);
        let nm = format!("{}", 10 * (i + 1));
        let bbox = BBox::new(0.1, 0.1, 0.4, 0.4);
        let page = i as u32 + 1;
        gold.triplets.push(GoldTriplet {
            protein: vec!["EGFR".into(), "ErbB1".into()],
            ligand: vec![key.clone(), alias.clone()],
            smiles: smiles.clone(),
            assay_type: AssayType::IC50,
            relation: Relation::Eq,
            value_nm: dec(&nm),
        });
        gold.structures.push(GoldStructure { coreference: key.clone(), smiles: smiles.clone(), markush: false, scaffold: None });
        gold.measurements.push(GoldMeasurement {
            protein: vec!["EGFR".into()],
            ligand: vec![key.clone(), alias.clone()],
            assay_type: AssayType::IC50,
            relation: Relation::Eq,
            value_nm: dec(&nm),
            modality: Some(Modality::Table),
        });
        gold.detections.push(GoldBox { page, bbox, smiles: Some(smiles.clone()), scaffold: None });

        if f != Fault::Missed {
            let read = if f == Fault::Misread { "CCCCCCCCCCCC".to_string() } else { smiles.clone() };
            record.detections.push(Detection {
                id: i,
                page,
                bbox: BBox::new(0.11, 0.1, 0.41, 0.4),
                score: 0.9,
                raw_smiles: Some(read),
                is_markush: false,
                flags: vec![],
            });
        }
        if !matches!(f, Fault::Missed | Fault::Misread) {
            let k = if f == Fault::WrongKey { format!("zz{i}") } else { key.clone() };
            record.structures.push(StructureRecord { coreference: k, smiles: smiles.clone(), origin: StructureOrigin::Explicit, provenance: vec![i] });
        }
        if f != Fault::NoMeasurement {
            let k = if f == Fault::AliasOnly { alias } else { key };
            record.measurements.push(measurement(&k, &nm));
        }
    }
    let normalized: Vec<_> = record.measurements.iter().map(|m| normalize(m).unwrap()).collect();
    record.triplets = join(&normalized, &record.structures).triplets;
    (record, gold)
}

#[test]
fn attribution_examples() {
    let (record, gold) = scenario(&[Fault::Missed, Fault::Misread, Fault::AliasOnly, Fault::None]);
    let a = attribute_errors(&record, &gold, &MatchConfig::default());
    let sources: Vec<ErrorSource> = a.per_triplet.iter().map(|x| x.2).collect();
    assert_eq!(sources, vec![ErrorSource::Detection, ErrorSource::Ocsr, ErrorSource::Integration]);
    assert_eq!(a.fractions[&ErrorSource::Ocsr], Ratio::new(1, 3));
    assert_eq!(a.fraction_sum(), Ratio::from_integer(1));
    let json = serde_json::to_string(&a).unwrap();
    assert!(json.contains("\"ocsr\":\"1/3\""), "{json}");
    assert_eq!(serde_json::from_str::<bioextract_core::eval::Attribution>(&json).unwrap(), a);
}

#[test]
fn stages_that_never_ran_are_unknown() {
    let (mut record, gold) = scenario(&[Fault::NoMeasurement]);
    record.stages.get_mut(&Stage::Measurement).unwrap().status = StageStatus::Pending;
    let a = attribute_errors(&record, &gold, &MatchConfig::default());
    assert_eq!(a.counts.get(&ErrorSource::Unknown), Some(&1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn attribution_finds_the_injected_fault(faults in prop::collection::vec(fault(), 1..=MOLECULES.len())) {
        let (record, gold) = scenario(&faults);
        let a = attribute_errors(&record, &gold, &MatchConfig::default());
        let want: Vec<(usize, ErrorSource)> =
            faults.iter().enumerate().filter_map(|(i, f)| expected(*f).map(|s| (i, s))).collect();
        let got: Vec<(usize, ErrorSource)> = a.per_triplet.iter().map(|x| (x.1, x.2)).collect();
        prop_assert_eq!(got, want);
        prop_assert_eq!(a.counts.values().sum::<usize>(), a.false_negatives);
        if a.false_negatives > 0 {
            prop_assert_eq!(a.fraction_sum(), Ratio::from_integer(1));
        }
    }

    #[test]
    fn scores_ignore_input_order_and_subsets_are_pure(
        picks in prop::collection::vec((0usize..4, 0usize..3, 0usize..3), 0..12),
        extra in prop::collection::vec((0usize..4, 0usize..3, 0usize..3), 0..6),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let proteins = ["EGFR", "HER2", "ABL1", "SRC"];
        let values = ["1", "10", "100"];
        let gold: Vec<GoldTriplet> = picks
            .iter()
            .map(|&(p, m, v)| GoldTriplet {
                protein: vec![proteins[p].into()],
                ligand: vec![],
                smiles: canonicalize_smiles(MOLECULES[m]).unwrap(),
                assay_type: AssayType::IC50,
                relation: Relation::Eq,
                value_nm: dec(values[v]),
            })
            .collect();
        let as_pred = |&(p, m, v): &(usize, usize, usize)| triplet(proteins[p], MOLECULES[m], AssayType::IC50, values[v]);
        let cfg = MatchConfig::default();

        // pred is a sub-multiset of gold
        let subset: Vec<_> = picks.iter().step_by(2).map(as_pred).collect();
        let c = match_triplets(&subset, &gold, &cfg).counts();
        prop_assert_eq!(c.prf::<f64>().precision, 1.0);

        // pred is a super-multiset of gold
        let mut superset: Vec<_> = picks.iter().map(as_pred).collect();
        superset.extend(extra.iter().map(as_pred));
        let c = match_triplets(&superset, &gold, &cfg).counts();
        prop_assert_eq!(c.prf::<f64>().recall, 1.0);

        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut shuffled_pred = superset.clone();
        shuffled_pred.shuffle(&mut rng);
        let mut shuffled_gold = gold.clone();
        shuffled_gold.shuffle(&mut rng);
        prop_assert_eq!(match_triplets(&shuffled_pred, &shuffled_gold, &cfg).counts(), c);
        let optimal = MatchConfig { optimal: true, ..cfg };
        prop_assert_eq!(match_triplets(&shuffled_pred, &shuffled_gold, &optimal).counts(), c);
    }
}
