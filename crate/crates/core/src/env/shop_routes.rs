//! Click routes through the shop, and a scripted navigator built from them.

use std::collections::BTreeMap;

use super::shop::{Phase, ShopEnv, MAX_SEARCH_RESULTS, PAGE_SIZE};
use crate::policy::{ScriptKey, ScriptedPolicy};
use crate::trajectory::{Action, Environment};

fn click(target: &str) -> Action {
    Action::new(format!("click[{target}]")).expect("click renders on one line")
}

/// Where a route ends up.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub actions: Vec<Action>,
    pub product: String,
    pub chosen: BTreeMap<String, String>,
    /// Matching reward of the purchase under the env's goal.
    pub reward: f64,
    pub price: f64,
}

/// Actions that search `query`, page to `product`, pick `options` and buy.
/// With `detour`, a different product on the same page is opened and left
/// first. `None` if the route does not replay to that purchase.
pub fn route_to(
    env: &ShopEnv,
    query: &str,
    product: &str,
    options: &BTreeMap<String, String>,
    detour: bool,
) -> Option<Route> {
    let results = env.catalog().search(query, MAX_SEARCH_RESULTS).ok()?;
    let pos = results.iter().position(|id| id == product)?;
    let page = pos / PAGE_SIZE;
    let mut actions = vec![Action::new(format!("search[{query}]")).ok()?];
    actions.extend(std::iter::repeat_n(click("next >"), page));
    if detour {
        let start = page * PAGE_SIZE;
        let end = (start + PAGE_SIZE).min(results.len());
        let other = results[start..end].iter().find(|id| *id != product)?;
        actions.push(click(other));
        actions.push(click("< prev"));
    }
    actions.push(click(product));
    actions.extend(options.values().map(|v| click(v)));
    actions.push(click("buy now"));

    let (mut replay, _) = env.fresh();
    for a in &actions {
        if replay.step(a).is_invalid_action() {
            return None;
        }
    }
    let Phase::Done { id, chosen } = &replay.state().phase else {
        return None;
    };
    if id != product {
        return None;
    }
    Some(Route {
        reward: replay.matching_reward(),
        price: replay.price().unwrap_or(0.0),
        product: id.clone(),
        chosen: chosen.clone(),
        actions,
    })
}

/// Options of `product` that spell the goal's required options, or `None`
/// when the product lacks one of them.
fn goal_options(env: &ShopEnv, product: &str) -> Option<BTreeMap<String, String>> {
    let p = env.catalog().get(product)?;
    env.goal()
        .required_options
        .iter()
        .map(|(group, value)| {
            let (g, v) = p.option_group_of(value)?;
            (g == group).then(|| (g.to_string(), v.to_string()))
        })
        .collect()
}

/// Direct routes to every product in the goal query's results that fully
/// satisfies the goal, in result order.
pub fn satisfying_routes(env: &ShopEnv) -> Vec<Route> {
    let query = env.goal().query();
    let Ok(results) = env.catalog().search(&query, MAX_SEARCH_RESULTS) else {
        return Vec::new();
    };
    results
        .iter()
        .filter_map(|id| {
            let options = goal_options(env, id)?;
            route_to(env, &query, id, &options, false)
        })
        .filter(|r| r.reward >= 1.0)
        .collect()
}

/// A route to the first result that does not satisfy the goal.
pub fn failing_route(env: &ShopEnv) -> Option<Route> {
    let query = env.goal().query();
    let results = env.catalog().search(&query, MAX_SEARCH_RESULTS).ok()?;
    results
        .iter()
        .filter_map(|id| route_to(env, &query, id, &BTreeMap::new(), false))
        .find(|r| r.reward < 1.0)
}

/// Which routes a navigator offers per goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavigatorSpec {
    /// Satisfying products offered, cheapest and priciest first.
    pub products: usize,
    /// Also offer each product through a detour.
    pub detours: bool,
    /// Weight of one route to a non-satisfying product; 0 leaves it out.
    pub failing_weight: f64,
}

impl Default for NavigatorSpec {
    fn default() -> Self {
        Self {
            products: 2,
            detours: true,
            failing_weight: 0.0,
        }
    }
}

/// Weighted routes for one goal.
pub fn navigator_routes(env: &ShopEnv, spec: &NavigatorSpec) -> Vec<(Vec<Action>, f64)> {
    let mut satisfying = satisfying_routes(env);
    satisfying.sort_by(|a, b| a.price.total_cmp(&b.price));
    let mut picked: Vec<Route> = Vec::new();
    // alternate cheapest / priciest so two products span the price range
    while picked.len() < spec.products && !satisfying.is_empty() {
        let r = if picked.len() % 2 == 0 {
            satisfying.remove(0)
        } else {
            satisfying.pop().expect("non-empty")
        };
        picked.push(r);
    }
    let query = env.goal().query();
    let mut out: Vec<(Vec<Action>, f64)> = Vec::new();
    for r in &picked {
        out.push((r.actions.clone(), 1.0));
        if spec.detours {
            if let Some(d) = route_to(env, &query, &r.product, &r.chosen, true) {
                out.push((d.actions, 1.0));
            }
        }
    }
    if spec.failing_weight > 0.0 {
        if let Some(f) = failing_route(env) {
            out.push((f.actions, spec.failing_weight));
        }
    }
    out
}

/// A scripted policy that follows [`navigator_routes`] for each env's
/// instruction and falls back to the valid actions elsewhere.
pub fn navigator<'a>(envs: impl IntoIterator<Item = &'a ShopEnv>, spec: &NavigatorSpec) -> ScriptedPolicy {
    let mut policy = ScriptedPolicy::new(ScriptKey::InstructionHistory).with_exhaustive(true);
    for env in envs {
        policy.add_task_routes(0, &env.instruction().text, &navigator_routes(env, spec));
    }
    policy
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::env::shop::{Catalog, GoalRecord, Price, UserGoal};
    use crate::env::shop_fixture::synthetic_catalog;

    fn speaker_env(cap: u64) -> ShopEnv {
        let catalog = Arc::new(synthetic_catalog(60, 3));
        let goal = UserGoal {
            required_attributes: ["speaker".to_string()].into(),
            required_options: BTreeMap::new(),
            price_cap: Some(Price(cap)),
        };
        ShopEnv::from_record(catalog, &GoalRecord::from_goal(goal), "speaker").unwrap()
    }

    #[test]
    fn routes_buy_what_they_claim() {
        let env = speaker_env(5000);
        let routes = satisfying_routes(&env);
        assert!(routes.iter().any(|r| r.product == "B09STMXYR5"));
        for r in &routes {
            assert_eq!(r.reward, 1.0);
            assert!(r.price <= 50.0);
        }
        let direct = &routes[0];
        let detour = route_to(&env, &env.goal().query(), &direct.product, &direct.chosen, true).unwrap();
        assert_eq!(detour.actions.len(), direct.actions.len() + 2);
        assert_eq!(detour.product, direct.product);
    }

    #[test]
    fn unknown_product_has_no_route() {
        let env = speaker_env(5000);
        assert!(route_to(&env, "speaker", "NOPE", &BTreeMap::new(), false).is_none());
    }

    #[test]
    fn navigator_follows_its_routes() {
        let env = speaker_env(5000);
        let spec = NavigatorSpec {
            failing_weight: 1.0,
            ..NavigatorSpec::default()
        };
        let routes = navigator_routes(&env, &spec);
        assert!(routes.len() >= 3);
        let nav = navigator([&env], &spec);
        let budget = crate::planners::Budget::default();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let (_, traj) = crate::planners::rollout(&env, &nav, &budget, 1.0, seed).unwrap();
            let actions: Vec<Action> = traj.actions().cloned().collect();
            assert!(routes.iter().any(|(r, _)| *r == actions), "off-route: {actions:?}");
            seen.insert(actions);
        }
        assert!(seen.len() >= 2);
    }

    #[test]
    fn failing_route_misses_the_goal() {
        let catalog = Arc::new(Catalog::new(synthetic_catalog(60, 3).products().to_vec()).unwrap());
        let goal = UserGoal {
            required_attributes: ["speaker".to_string()].into(),
            required_options: BTreeMap::new(),
            price_cap: Some(Price(3000)),
        };
        let env = ShopEnv::from_record(catalog, &GoalRecord::from_goal(goal), "cheap").unwrap();
        let f = failing_route(&env).unwrap();
        assert!(f.reward < 1.0);
    }
}
