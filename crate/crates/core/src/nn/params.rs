use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

/// One physical parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    /// Canonical (owning) name.
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    /// Weight decay applies to weights, never to biases.
    pub decay: bool,
}

/// Named parameter arrays. Several logical names may resolve to the same
/// physical slot; that is how blocks share weights.
#[derive(Debug)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
    id: u64,
    version: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        ParamStore {
            params: self.params.clone(),
            index: self.index.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.index == other.index
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: BTreeMap::new(),
            id: fresh_id(),
            version: 0,
        }
    }

    /// Identity of this store instance and its mutation counter; caches use
    /// the pair to detect that parameters changed after a forward pass.
    pub fn stamp(&self) -> (u64, u64) {
        (self.id, self.version)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn add(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>, decay: bool) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::config(format!("parameter {name} already exists")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape {
                layer: 0,
                expected: shape,
                actual: vec![data.len()],
            });
        }
        let slot = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            shape,
            data,
            decay,
        });
        self.index.insert(name.to_string(), slot);
        self.version += 1;
        Ok(slot)
    }

    /// Add a weight initialised uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)),
    /// drawn from a substream named after the parameter.
    pub fn add_glorot(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, fan_out: usize, seed: u64) -> Result<usize> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut r = rng::substream(seed, name);
        let n = shape.iter().product();
        let data = (0..n).map(|_| r.random_range(-a..a)).collect();
        self.add(name, shape, data, true)
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<usize> {
        let n = shape.iter().product();
        self.add(name, shape, vec![0.0; n], false)
    }

    /// Make `alias` resolve to the physical storage of `target`.
    pub fn share(&mut self, alias: &str, target: &str) -> Result<()> {
        let slot = self.slot(target)?;
        if self.index.contains_key(alias) {
            return Err(Error::config(format!("cannot alias existing parameter {alias}")));
        }
        self.index.insert(alias.to_string(), slot);
        Ok(())
    }

    pub fn slot(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        Ok(&self.params[self.slot(name)?])
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.param(name)?.data)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let slot = self.slot(name)?;
        self.version += 1;
        Ok(&mut self.params[slot].data)
    }

    pub fn slots(&self) -> &[Param] {
        &self.params
    }

    pub(crate) fn slot_data(&self, slot: usize) -> &[f64] {
        &self.params[slot].data
    }

    pub(crate) fn slot_data_mut(&mut self, slot: usize) -> &mut [f64] {
        self.version += 1;
        &mut self.params[slot].data
    }

    /// All logical names in lexical order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// `(alias, canonical)` pairs for every logical name that is not the
    /// owner of its storage.
    pub fn sharing_table(&self) -> Vec<(String, String)> {
        self.index
            .iter()
            .filter(|(name, &slot)| self.params[slot].name != **name)
            .map(|(name, &slot)| (name.clone(), self.params[slot].name.clone()))
            .collect()
    }

    pub fn is_shared(&self, a: &str, b: &str) -> bool {
        matches!((self.slot(a), self.slot(b)), (Ok(x), Ok(y)) if x == y)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Copy every slot and alias of `other` into this store. Names must be
    /// disjoint.
    pub fn merge(&mut self, other: &ParamStore) -> Result<()> {
        for p in &other.params {
            self.add(&p.name, p.shape.clone(), p.data.clone(), p.decay)?;
        }
        for (alias, target) in other.sharing_table() {
            self.share(&alias, &target)?;
        }
        Ok(())
    }

    /// A new store holding only the slots whose canonical name satisfies
    /// `keep`, with the aliases that still resolve.
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> ParamStore {
        let params: Vec<Param> = self.params.iter().filter(|p| keep(&p.name)).cloned().collect();
        let aliases = self
            .sharing_table()
            .into_iter()
            .filter(|(_, target)| keep(target))
            .collect();
        ParamStore::from_parts(params, aliases).expect("subset of a valid store")
    }

    /// Rebuild from raw parts (checkpoint loading).
    pub(crate) fn from_parts(params: Vec<Param>, aliases: Vec<(String, String)>) -> Result<Self> {
        let mut store = ParamStore::new();
        for p in params {
            store.add(&p.name, p.shape, p.data, p.decay)?;
        }
        for (alias, target) in aliases {
            store.share(&alias, &target)?;
        }
        Ok(store)
    }
}

/// Gradient buffers congruent with a [`ParamStore`]: one buffer per physical
/// slot, so every path through a shared block adds into the same buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) slots: Vec<Vec<f64>>,
    pub(crate) touched: Vec<bool>,
}

impl Gradients {
    pub fn for_store(store: &ParamStore) -> Self {
        Gradients {
            slots: store.params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            touched: vec![false; store.params.len()],
        }
    }

    pub fn get<'a>(&'a self, store: &ParamStore, name: &str) -> Result<&'a [f64]> {
        Ok(&self.slots[store.slot(name)?])
    }

    pub fn get_mut<'a>(&'a mut self, store: &ParamStore, name: &str) -> Result<&'a mut [f64]> {
        let slot = store.slot(name)?;
        self.touched[slot] = true;
        Ok(&mut self.slots[slot])
    }

    pub(crate) fn slot_mut(&mut self, slot: usize) -> &mut [f64] {
        self.touched[slot] = true;
        &mut self.slots[slot]
    }

    /// Whether any backward pass wrote into the slot owning `name`.
    pub fn touched(&self, store: &ParamStore, name: &str) -> Result<bool> {
        Ok(self.touched[store.slot(name)?])
    }

    pub fn is_congruent(&self, store: &ParamStore) -> bool {
        self.slots.len() == store.params.len()
            && self.slots.iter().zip(&store.params).all(|(g, p)| g.len() == p.data.len())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (i, (a, b)) in self.slots.iter_mut().zip(&other.slots).enumerate() {
            if other.touched[i] {
                self.touched[i] = true;
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in &mut self.slots {
            for v in s.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slots
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_names_resolve_to_one_slot() {
        let mut s = ParamStore::new();
        s.add("c.h.w", vec![2], vec![1.0, 2.0], true).unwrap();
        s.share("p.h.w", "c.h.w").unwrap();
        s.get_mut("p.h.w").unwrap()[0] = 9.0;
        assert_eq!(s.get("c.h.w").unwrap(), &[9.0, 2.0]);
        assert!(s.is_shared("c.h.w", "p.h.w"));
        assert_eq!(s.sharing_table(), vec![("p.h.w".to_string(), "c.h.w".to_string())]);
        assert_eq!(s.len(), 1);
        assert!(s.share("p.h.w", "c.h.w").is_err());
        assert!(s.get("nope").is_err());
    }

    #[test]
    fn merge_and_filter_keep_sharing() {
        let mut a = ParamStore::new();
        a.add("c.w", vec![1], vec![1.0], true).unwrap();
        a.share("p.w", "c.w").unwrap();
        a.add("c.cls.w", vec![1], vec![2.0], true).unwrap();
        let kept = a.filtered(|n| !n.starts_with("c.cls"));
        assert_eq!(kept.len(), 1);
        assert!(kept.is_shared("p.w", "c.w"));
        let mut b = ParamStore::new();
        b.add("q", vec![1], vec![3.0], false).unwrap();
        b.merge(&kept).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.is_shared("p.w", "c.w"));
        assert!(b.merge(&kept).is_err());
    }

    #[test]
    fn shared_gradients_accumulate() {
        let mut s = ParamStore::new();
        s.add("a", vec![1], vec![0.0], true).unwrap();
        s.share("b", "a").unwrap();
        let mut g = Gradients::for_store(&s);
        g.get_mut(&s, "a").unwrap()[0] += 1.5;
        g.get_mut(&s, "b").unwrap()[0] += 2.0;
        assert_eq!(g.get(&s, "a").unwrap(), &[3.5]);
        assert!(g.is_congruent(&s));
    }

    #[test]
    fn stamp_tracks_mutation_and_identity() {
        let mut s = ParamStore::new();
        s.add("a", vec![1], vec![0.0], true).unwrap();
        let before = s.stamp();
        s.get_mut("a").unwrap()[0] = 1.0;
        assert_ne!(before, s.stamp());
        let c = s.clone();
        assert_ne!(c.stamp().0, s.stamp().0);
        assert_eq!(c, s);
    }

    #[test]
    fn glorot_init_is_seeded_and_bounded() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        a.add_glorot("w", vec![10, 20], 10, 20, 5).unwrap();
        b.add_glorot("w", vec![10, 20], 10, 20, 5).unwrap();
        assert_eq!(a.get("w").unwrap(), b.get("w").unwrap());
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(a.get("w").unwrap().iter().all(|v| v.abs() < bound));
    }
}
