//! Type-erased payload plumbing.
//!
//! Edges carry payloads as shared, type-erased values. Deep-copy edges clone
//! the value at delivery so every subscriber owns an isolated copy; zero-copy
//! edges hand out a shared view. Payload types must be `Clone + Send + Sync`;
//! the isolation guarantee holds as far as `Clone` produces a disjoint value
//! (true for ordinary owned data — types with shared interior mutability
//! alias through their clones and void it).

use std::any::{Any, TypeId};
use std::sync::Arc;

/// Object-safe payload surface. Blanket-implemented for every eligible type.
pub trait AnyMessage: Any + Send + Sync {
    fn clone_boxed(&self) -> Box<dyn AnyMessage>;
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
    fn into_any(self: Box<Self>) -> Box<dyn Any + Send>;
    fn type_name(&self) -> &'static str;
}

impl<T: Clone + Send + Sync + 'static> AnyMessage for T {
    fn clone_boxed(&self) -> Box<dyn AnyMessage> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any + Send> {
        self
    }

    fn type_name(&self) -> &'static str {
        std::any::type_name::<T>()
    }
}

/// A payload as handed to a component callback.
///
/// `Owned` payloads come from deep-copy edges: the component may mutate or
/// consume them freely. `Shared` payloads come from zero-copy edges and only
/// offer a read view (consuming one clones).
pub enum Payload {
    Owned(Box<dyn AnyMessage>),
    Shared(Arc<dyn AnyMessage>),
}

impl Payload {
    pub fn of<T: Clone + Send + Sync + 'static>(value: T) -> Payload {
        Payload::Owned(Box::new(value))
    }

    fn any(&self) -> &dyn Any {
        // explicit derefs: the blanket impl must not resolve on the smart
        // pointer itself
        match self {
            Payload::Owned(b) => (**b).as_any(),
            Payload::Shared(a) => (**a).as_any(),
        }
    }

    pub fn payload_type_name(&self) -> &'static str {
        match self {
            Payload::Owned(b) => (**b).type_name(),
            Payload::Shared(a) => (**a).type_name(),
        }
    }

    pub fn is_owned(&self) -> bool {
        matches!(self, Payload::Owned(_))
    }

    /// Read access. Panics on a type mismatch, which indicates a wiring bug —
    /// edges are type-checked at connect time.
    pub fn get<T: 'static>(&self) -> &T {
        match self.any().downcast_ref::<T>() {
            Some(v) => v,
            None => panic!(
                "payload type mismatch: expected {}, carried {}",
                std::any::type_name::<T>(),
                self.payload_type_name()
            ),
        }
    }

    /// Mutable access; available only for owned (deep-copied) deliveries.
    pub fn try_mut<T: 'static>(&mut self) -> Option<&mut T> {
        match self {
            Payload::Owned(b) => (**b).as_any_mut().downcast_mut::<T>(),
            Payload::Shared(_) => None,
        }
    }

    /// Takes the value: moves owned payloads, clones shared ones.
    pub fn into_value<T: Clone + Send + Sync + 'static>(self) -> T {
        match self {
            Payload::Owned(b) => match b.into_any().downcast::<T>() {
                Ok(v) => *v,
                Err(_) => panic!(
                    "payload type mismatch: expected {}",
                    std::any::type_name::<T>()
                ),
            },
            Payload::Shared(a) => (*a).as_any().downcast_ref::<T>().cloned().unwrap_or_else(|| {
                panic!(
                    "payload type mismatch: expected {}",
                    std::any::type_name::<T>()
                )
            }),
        }
    }
}

/// Runtime type tag for dynamic port compatibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortType {
    pub id: TypeId,
    pub name: &'static str,
}

impl PortType {
    pub fn of<T: 'static>() -> PortType {
        PortType {
            id: TypeId::of::<T>(),
            name: std::any::type_name::<T>(),
        }
    }

    /// Short display name: the last path segment of the Rust type path.
    pub fn short_name(&self) -> &'static str {
        self.name.rsplit("::").next().unwrap_or(self.name)
    }
}
