//! Built-in lattices and periodic sets.

use serde::Serialize;

use crate::enumeration::min_norm_shell;
use crate::error::{Error, Result};
use crate::forms::{PeriodicForm, QuadForm};
use crate::scalar::{parse_rational, Rational, Real};

const LEECH_GRAM: &str = include_str!("../data/leech_gram.json");

const D4: [[i64; 4]; 4] = [[2, -1, 0, 0], [-1, 2, -1, -1], [0, -1, 2, 0], [0, -1, 0, 2]];

const E8: [[i64; 8]; 8] = [
    [2, 0, -1, 0, 0, 0, 0, 0],
    [0, 2, 0, -1, 0, 0, 0, 0],
    [-1, 0, 2, -1, 0, 0, 0, 0],
    [0, -1, -1, 2, -1, 0, 0, 0],
    [0, 0, 0, -1, 2, -1, 0, 0],
    [0, 0, 0, 0, -1, 2, -1, 0],
    [0, 0, 0, 0, 0, -1, 2, -1],
    [0, 0, 0, 0, 0, 0, -1, 2],
];

/// Glue vector of `D9+` in the simple-root basis of `D9`: the image of `(1/2)^9`.
const D9_GLUE: [&str; 9] = ["1/2", "0", "1/2", "0", "1/2", "0", "1/2", "3/4", "1/4"];

/// Largest `d` accepted by `zd:<d>`.
pub const MAX_ZD: usize = 32;

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub id: String,
    pub dim: usize,
    pub gram: Vec<Vec<i64>>,
    /// Coset translations as `p/q` strings; a single zero vector for lattices.
    pub translations: Vec<Vec<String>>,
    /// Expected number of minimal vectors of the lattice, when known.
    pub kissing: Option<usize>,
    pub min_norm: i64,
    pub notes: String,
}

impl CatalogEntry {
    pub fn is_lattice(&self) -> bool {
        self.translations.len() == 1
    }

    pub fn quad_form<T: Real>(&self) -> Result<QuadForm<T>> {
        QuadForm::from_integer_rows(&self.gram)
    }

    pub fn form<T: Real>(&self) -> Result<PeriodicForm<T>> {
        let q = self.quad_form()?;
        let us: Vec<Vec<Rational>> = self
            .translations
            .iter()
            .map(|u| u.iter().map(|s| parse_rational(s).ok_or_else(|| Error::Parse(s.clone()))).collect())
            .collect::<Result<_>>()?;
        PeriodicForm::from_exact(q, &us)
    }
}

/// The fixed ids, without the `zd:<d>` family.
pub const FIXED_IDS: [&str; 5] = ["a2", "d4", "e8", "leech", "d9plus"];

fn square<const N: usize>(rows: &[[i64; N]; N]) -> Vec<Vec<i64>> {
    rows.iter().map(|r| r.to_vec()).collect()
}

fn zero(d: usize) -> Vec<Vec<String>> {
    vec![vec!["0".to_string(); d]]
}

pub fn catalog_entry(id: &str) -> Result<CatalogEntry> {
    let id = id.trim().to_ascii_lowercase();
    let entry = |gram: Vec<Vec<i64>>, translations, kissing, min_norm, notes: &str| CatalogEntry {
        id: id.clone(),
        dim: gram.len(),
        gram,
        translations,
        kissing,
        min_norm,
        notes: notes.to_string(),
    };
    if let Some(rest) = id.strip_prefix("zd:") {
        let d: usize = rest.parse().map_err(|_| Error::UnknownLattice(id.clone()))?;
        if d == 0 || d > MAX_ZD {
            return Err(Error::UnknownLattice(id.clone()));
        }
        let gram = (0..d).map(|i| (0..d).map(|j| i64::from(i == j)).collect()).collect();
        return Ok(entry(gram, zero(d), Some(2 * d), 1, "integer lattice Z^d"));
    }
    Ok(match id.as_str() {
        "a2" => entry(vec![vec![2, 1], vec![1, 2]], zero(2), Some(6), 2, "hexagonal lattice A2"),
        "d4" => entry(square(&D4), zero(4), Some(24), 2, "root lattice D4, Cartan matrix"),
        "e8" => entry(square(&E8), zero(8), Some(240), 2, "root lattice E8, Cartan matrix (Bourbaki order)"),
        "leech" => {
            let gram: Vec<Vec<i64>> =
                serde_json::from_str(LEECH_GRAM).map_err(|e| Error::Parse(format!("embedded Leech Gram: {e}")))?;
            entry(
                gram,
                zero(24),
                Some(196_560),
                4,
                "Leech lattice scaled to minimum 4: LLL-reduced basis of the Golay-code construction, Gram divided by 8",
            )
        }
        "d9plus" => {
            let mut t = zero(9);
            t.push(D9_GLUE.iter().map(|s| s.to_string()).collect());
            entry(d9_cartan(), t, None, 2, "D9+ = D9 ∪ (D9 + (1/2)^9), two cosets of D9 in the simple-root basis; not a lattice")
        }
        _ => return Err(Error::UnknownLattice(id.clone())),
    })
}

fn d9_cartan() -> Vec<Vec<i64>> {
    let n = 9;
    let mut g = vec![vec![0i64; n]; n];
    for (i, row) in g.iter_mut().enumerate() {
        row[i] = 2;
    }
    for i in 0..n - 2 {
        g[i][i + 1] = -1;
        g[i + 1][i] = -1;
    }
    // The last node hangs off node n-3 instead of n-2.
    g[n - 2][n - 1] = 0;
    g[n - 1][n - 2] = 0;
    g[n - 3][n - 1] = -1;
    g[n - 1][n - 3] = -1;
    g
}

/// Loads a catalog entry as an exact periodic form. In debug builds the
/// minimal-vector count of lattice entries is checked against the entry.
pub fn load_catalog<T: Real>(id: &str) -> Result<PeriodicForm<T>> {
    let entry = catalog_entry(id)?;
    let form = entry.form::<T>()?;
    if cfg!(debug_assertions) && entry.is_lattice() {
        verify_entry(&entry, form.q())?;
    }
    Ok(form)
}

/// The Gram matrix of a lattice entry; fails for periodic non-lattice entries.
pub fn load_lattice<T: Real>(id: &str) -> Result<QuadForm<T>> {
    let entry = catalog_entry(id)?;
    if !entry.is_lattice() {
        return Err(Error::PreconditionFailed(format!("{} is not a lattice", entry.id)));
    }
    Ok(load_catalog::<T>(id)?.q().clone())
}

fn verify_entry<T: Real>(entry: &CatalogEntry, q: &QuadForm<T>) -> Result<()> {
    let shell = min_norm_shell(q)?;
    let ok_norm = shell.alpha == T::from_int(entry.min_norm as i128);
    let ok_count = entry.kissing.is_none_or(|k| k == shell.count());
    if ok_norm && ok_count {
        Ok(())
    } else {
        Err(Error::InternalInconsistency(format!(
            "catalog entry {} has min norm {} with {} vectors",
            entry.id,
            shell.alpha,
            shell.count()
        )))
    }
}

/// One summary line per fixed id plus a few `zd:<d>` examples.
pub fn list_catalog() -> Result<Vec<CatalogEntry>> {
    let mut ids: Vec<String> = vec!["zd:2".into(), "zd:3".into()];
    ids.extend(FIXED_IDS.iter().map(|s| s.to_string()));
    ids.iter().map(|id| catalog_entry(id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::detect_lattice;

    #[test]
    fn small_entries_load() {
        let z3 = load_catalog::<f64>("zd:3").unwrap();
        assert_eq!(z3.m(), 1);
        assert_eq!(z3.q().gram()[(1, 1)], 1.0);
        for id in ["a2", "d4", "e8"] {
            load_catalog::<f64>(id).unwrap();
        }
        let d4 = load_lattice::<f64>("d4").unwrap();
        assert!((d4.det() - 4.0).abs() < 1e-12);
        let e8 = load_lattice::<f64>("e8").unwrap();
        assert!((e8.det() - 1.0).abs() < 1e-12);
        assert!(matches!(load_catalog::<f64>("e7"), Err(Error::UnknownLattice(_))));
        assert!(matches!(load_catalog::<f64>("zd:0"), Err(Error::UnknownLattice(_))));
    }

    #[test]
    fn d9plus_is_not_a_lattice() {
        let p = load_catalog::<f64>("d9plus").unwrap();
        assert_eq!(p.m(), 2);
        assert!((p.q().det() - 4.0).abs() < 1e-10);
        assert!(detect_lattice(&p).table().is_none());
        // The glue coset sits at squared distance 9/4 from the origin.
        let glue = crate::enumeration::coset_min_norm(p.q(), &p.translations()[1]).unwrap();
        assert!((glue - 2.25).abs() < 1e-12);
    }
}
