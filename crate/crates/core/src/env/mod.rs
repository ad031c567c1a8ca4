pub mod game24;
pub mod shop;
pub mod shop_fixture;
pub mod shop_routes;

pub use game24::{Game24Env, Puzzle};
pub use shop::{Catalog, ShopEnv, UserGoal};
