//! Benchmark instances: the grid maze, the two-step nonconvex toy, random
//! instances and instance files.

pub mod instance;
pub mod maze;
pub mod random;
pub mod toy;

pub use instance::{instance_to_json, load_instance, parse_instance, save_instance, Cards, InstanceFile};
pub use maze::{build_maze, two_route_maze, Direction, MazeSpec, MAZE_ACTIONS};
pub use random::{random_instance, RandomSpec};
pub use toy::{build_hamming_channel, build_nonconvex_toy};
