//! From traces to a route: heat map, blur, skeleton, graph, termini and
//! route-completion fractions.

mod blur;
mod graph;
mod raster;
mod rdp;
mod route;
mod skeleton;

pub use blur::gaussian_blur;
pub use graph::{build_graph, Edge, GraphParams, Node, RouteGraph};
pub use raster::{rasterize_heatmap, HeatmapParams, Raster};
pub use rdp::{perpendicular_distance, rdp, segment_distance};
pub use route::{
    derive_route_model, route_completion, DirectedEdge, Direction, RouteModel, RouteParams,
    RouteTracker, Terminus, TerminusRule, Unmatched,
};
pub use skeleton::{is_simple, neighbour_count, skeletonize, SkeletonMask};
