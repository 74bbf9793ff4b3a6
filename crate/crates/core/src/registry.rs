use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Anything that can be looked up by a stable name.
pub trait Named {
    fn name(&self) -> &str;
}

/// Name-keyed collection of interchangeable strategy objects.
pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: BTreeMap<String, Box<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Adds `item`, replacing any entry registered under the same name.
    pub fn register(&mut self, item: Box<T>) -> &mut Self {
        self.entries.insert(item.name().to_string(), item);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: self.kind,
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape: Named {
        fn area(&self) -> f64;
    }
    struct Square(f64);
    impl Named for Square {
        fn name(&self) -> &str {
            "square"
        }
    }
    impl Shape for Square {
        fn area(&self) -> f64 {
            self.0 * self.0
        }
    }

    #[test]
    fn lookup_and_replace() {
        let mut r: Registry<dyn Shape> = Registry::new("shape");
        r.register(Box::new(Square(2.0)));
        assert_eq!(r.get("square").unwrap().area(), 4.0);
        r.register(Box::new(Square(3.0)));
        assert_eq!(r.get("square").unwrap().area(), 9.0);
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["square"]);
        let err = r.get("circle").err().unwrap();
        assert_eq!(err.to_string(), "unknown shape 'circle'");
    }
}
