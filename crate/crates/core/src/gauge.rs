//! Live-buffer accounting for iterate storage.
//!
//! Solvers wrap every iterate-sized vector they keep alive in a [`Held`]
//! guard; the gauge records how many are alive at once. This is how the
//! constant-memory implicit training path is compared against the
//! stored-state unrolled path.

use std::cell::Cell;
use std::ops::{Deref, DerefMut};

#[derive(Debug, Default)]
pub struct BufferGauge {
    live: Cell<usize>,
    peak: Cell<usize>,
}

impl BufferGauge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hold<T>(&self, value: T) -> Held<'_, T> {
        let live = self.live.get() + 1;
        self.live.set(live);
        self.peak.set(self.peak.get().max(live));
        Held {
            value: Some(value),
            gauge: self,
        }
    }

    pub fn live(&self) -> usize {
        self.live.get()
    }

    /// Largest number of simultaneously held buffers seen so far.
    pub fn peak(&self) -> usize {
        self.peak.get()
    }
}

pub struct Held<'g, T> {
    value: Option<T>,
    gauge: &'g BufferGauge,
}

impl<T> Held<'_, T> {
    /// Releases the buffer from accounting and returns it.
    pub fn into_inner(mut self) -> T {
        self.value.take().expect("value present until dropped")
    }
}

impl<T> Deref for Held<'_, T> {
    type Target = T;
    fn deref(&self) -> &T {
        self.value.as_ref().expect("value present until dropped")
    }
}

impl<T> DerefMut for Held<'_, T> {
    fn deref_mut(&mut self) -> &mut T {
        self.value.as_mut().expect("value present until dropped")
    }
}

impl<T> Drop for Held<'_, T> {
    fn drop(&mut self) {
        self.gauge.live.set(self.gauge.live.get() - 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_peak() {
        let g = BufferGauge::new();
        {
            let _a = g.hold(1);
            let b = g.hold(2);
            assert_eq!(g.live(), 2);
            assert_eq!(b.into_inner(), 2);
            assert_eq!(g.live(), 1);
        }
        assert_eq!(g.live(), 0);
        assert_eq!(g.peak(), 2);
    }
}
