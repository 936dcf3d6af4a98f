//! Voronoi and power tessellations recovered from partial differential equations.
//!
//! Four independent constructions produce a tessellation of a set of sites,
//! and every one of them is scored against the exact nearest-site labeling in
//! [`geom`]:
//!
//! - [`colonize`]: Brownian explorers that claim territory and are sent home
//!   when they touch a rival trajectory or the wall.
//! - [`heat`]: superposed heat kernels, whose ray profiles decrease inside
//!   every cell for short times.
//! - [`eikonal`]: fast-marching arrival times, whose front collision set is
//!   the cell boundary.
//! - [`transport`]: the convex potential whose gradient shrinks each power
//!   cell toward its site, checked as a Monge–Ampère solution and as an
//!   optimal transport map.
//!
//! [`harmonic`] adds the harmonic tessellation of a perforated domain, and
//! [`runner`] ties everything to the `pde-voronoi` command line tool.

pub mod colonize;
pub mod config;
pub mod eikonal;
pub mod error;
pub mod geom;
pub mod harmonic;
pub mod heat;
pub mod io;
pub mod runner;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use geom::{GridSpec, LabelGrid, Mode, Point, Rect, ScalarField, SiteSet, Topology, UNASSIGNED};
