use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fitness_score, CandidatePatch, CompatBug, FitnessScore, KeyFieldSet};
use crate::kb::KnowledgeBase;
use crate::xml::{apply_patch, AttrName, ElementLocator, Patch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedPatch {
    pub patch: Patch,
    pub fitness: FitnessScore,
    /// Indices into the input patches, ascending.
    pub members: Vec<usize>,
}

/// Inclusion probabilities: scores clamped to [0, 1], or uniform `1/m` when
/// every clamped score is 0.
pub fn inclusion_probabilities(patches: &[CandidatePatch]) -> Vec<f64> {
    let p: Vec<f64> = patches
        .iter()
        .map(|c| c.fitness.score.clamp(0.0, 1.0))
        .collect();
    if p.iter().all(|&x| x == 0.0) {
        vec![1.0 / patches.len() as f64; patches.len()]
    } else {
        p
    }
}

/// Keeps a conflict-free subset of `included`: patches are taken best-first
/// (rank, then input order) and dropped when they touch an attribute an
/// already kept patch touches. Returns ascending indices.
pub fn resolve_conflicts(patches: &[CandidatePatch], included: &[usize]) -> Vec<usize> {
    let mut order = included.to_vec();
    order.sort_by(|&a, &b| {
        patches[b]
            .fitness
            .rank_cmp(&patches[a].fitness)
            .then(a.cmp(&b))
    });
    let mut touched: HashSet<(ElementLocator, AttrName)> = HashSet::new();
    let mut kept = Vec::new();
    for i in order {
        let attrs: Vec<(ElementLocator, AttrName)> = patches[i]
            .patch
            .edits
            .iter()
            .flat_map(|e| {
                e.touched_attrs()
                    .into_iter()
                    .map(|a| (e.target().clone(), a.clone()))
            })
            .collect();
        if attrs.iter().any(|t| touched.contains(t)) {
            continue;
        }
        touched.extend(attrs);
        kept.push(i);
    }
    kept.sort_unstable();
    kept
}

/// Concatenation of the member patches, in index order.
pub fn combine(patches: &[CandidatePatch], members: &[usize]) -> Patch {
    members.iter().fold(Patch::identity(), |acc, &i| {
        acc.then(patches[i].patch.clone())
    })
}

/// Draws `n_samples` inclusion vectors (one uniform per patch per sample,
/// from a ChaCha8 stream seeded with `rng_seed`), resolves conflicts,
/// evaluates each non-empty combination and returns the best one; earlier
/// draws win ties. Returns the best single patch when no draw includes
/// anything, and `None` for an empty input.
pub fn sample_combined_patches(
    patches: &[CandidatePatch],
    bug: &CompatBug,
    key_fields: &KeyFieldSet,
    kb: &KnowledgeBase,
    n_samples: usize,
    rng_seed: u64,
) -> Option<CombinedPatch> {
    if patches.is_empty() {
        return None;
    }
    let p = inclusion_probabilities(patches);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<CombinedPatch> = None;
    for _ in 0..n_samples {
        let draws: Vec<f64> = (0..patches.len()).map(|_| rng.random::<f64>()).collect();
        let included: Vec<usize> = (0..patches.len()).filter(|&i| draws[i] < p[i]).collect();
        let members = resolve_conflicts(patches, &included);
        if members.is_empty() {
            continue;
        }
        let patch = combine(patches, &members);
        let Ok(doc) = apply_patch(&bug.document, &patch) else {
            continue;
        };
        let Ok(fitness) = fitness_score(&doc, bug, Some(key_fields), kb) else {
            continue;
        };
        if best
            .as_ref()
            .is_none_or(|b| fitness.rank_cmp(&b.fitness).is_gt())
        {
            best = Some(CombinedPatch {
                patch,
                fitness,
                members,
            });
        }
    }
    best.or_else(|| {
        let mut top = 0;
        for i in 1..patches.len() {
            if patches[i].fitness.rank_cmp(&patches[top].fitness).is_gt() {
                top = i;
            }
        }
        Some(CombinedPatch {
            patch: patches[top].patch.clone(),
            fitness: patches[top].fitness.clone(),
            members: vec![top],
        })
    })
}
