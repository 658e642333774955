//! Rubrics shipped with the public worlds.

use std::path::Path;

use super::judge::{JudgeError, RubricFile};

const BUILTIN: [(&str, &str); 11] = [
    ("gravity", include_str!("../../rubrics/gravity.toml")),
    ("yukawa", include_str!("../../rubrics/yukawa.toml")),
    ("fractional", include_str!("../../rubrics/fractional.toml")),
    ("circle", include_str!("../../rubrics/circle.toml")),
    ("three_species", include_str!("../../rubrics/three_species.toml")),
    ("dark_matter", include_str!("../../rubrics/dark_matter.toml")),
    ("ether", include_str!("../../rubrics/ether.toml")),
    ("hubble", include_str!("../../rubrics/hubble.toml")),
    ("oscillator", include_str!("../../rubrics/oscillator.toml")),
    ("extra_dimensions", include_str!("../../rubrics/extra_dimensions.toml")),
    ("coulomb_easy", include_str!("../../rubrics/coulomb_easy.toml")),
];

pub fn builtin_rubric(world: &str) -> Option<RubricFile> {
    BUILTIN
        .iter()
        .find(|(name, _)| *name == world)
        .map(|(_, text)| RubricFile::from_toml(text).expect("shipped rubrics are valid"))
}

/// `dir/<world>.toml` when present, otherwise the shipped rubric.
pub fn find_rubric(world: &str, dir: Option<&Path>) -> Result<Option<RubricFile>, JudgeError> {
    if let Some(dir) = dir {
        let path = dir.join(format!("{world}.toml"));
        if path.is_file() {
            return RubricFile::load(&path).map(Some);
        }
    }
    Ok(builtin_rubric(world))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcelaws::catalog::WORLD_NAMES;

    #[test]
    fn every_world_has_a_valid_rubric() {
        for name in WORLD_NAMES {
            let rubric = builtin_rubric(name).unwrap();
            assert_eq!(rubric.world, name);
            assert!(rubric.violations().is_empty());
        }
    }
}
