use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;

trait Slot: Any + fmt::Debug {
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
    fn into_any(self: Box<Self>) -> Box<dyn Any>;
}

impl<T: Any + fmt::Debug> Slot for T {
    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

/// A machine's private key-value memory. Values are typed; reading a key
/// with the wrong type returns `None`.
#[derive(Debug, Default)]
pub struct Store {
    slots: BTreeMap<&'static str, Box<dyn Slot>>,
}

impl Store {
    pub fn put<T: Any + fmt::Debug>(&mut self, key: &'static str, value: T) {
        self.slots.insert(key, Box::new(value));
    }

    pub fn get<T: Any>(&self, key: &str) -> Option<&T> {
        self.slots.get(key).and_then(|s| (**s).as_any().downcast_ref())
    }

    pub fn get_mut<T: Any>(&mut self, key: &str) -> Option<&mut T> {
        self.slots.get_mut(key).and_then(|s| (**s).as_any_mut().downcast_mut())
    }

    pub fn take<T: Any>(&mut self, key: &str) -> Option<T> {
        if !(**self.slots.get(key)?).as_any().is::<T>() {
            return None;
        }
        let slot = self.slots.remove(key)?;
        slot.into_any().downcast().ok().map(|b| *b)
    }

    pub fn remove(&mut self, key: &str) {
        self.slots.remove(key);
    }

    pub fn contains(&self, key: &str) -> bool {
        self.slots.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.slots.keys().copied()
    }

    /// Debug rendering of the whole store; equal stores give equal strings.
    pub fn fingerprint(&self) -> String {
        format!("{:?}", self.slots)
    }
}
