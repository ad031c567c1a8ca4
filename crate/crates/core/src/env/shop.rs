//! A deterministic toy web shop: search, browse result pages, pick product
//! options, buy. Pages render as `[SEP]`-joined text lines.
//!
//! Purchases are scored with a matching reward: the fraction of required
//! attributes, options, and the price cap that the purchase satisfies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{Action, Environment, Instruction, Observation, TaskOutcome};

pub const PAGE_SIZE: usize = 10;
pub const MAX_SEARCH_RESULTS: usize = 50;

#[derive(Debug, Error)]
pub enum ShopError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("schema error at line {line}, field `{field}`: {message}")]
    Schema {
        field: String,
        line: usize,
        message: String,
    },
    #[error("empty search query")]
    EmptyQuery,
    #[error("product {0} is not in the catalog")]
    UnknownProduct(String),
    #[error("invalid goal: {0}")]
    InvalidGoal(String),
}

/// Price in cents; reads and writes as a decimal number of dollars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Price(pub u64);

impl Price {
    pub fn from_dollars(d: f64) -> Option<Self> {
        if !d.is_finite() || d < 0.0 {
            return None;
        }
        Some(Self((d * 100.0).round() as u64))
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl Serialize for Price {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.dollars())
    }
}

impl<'de> Deserialize<'de> for Price {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Price::from_dollars(v)
            .ok_or_else(|| serde::de::Error::custom(format!("price must be a non-negative number, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: String,
    pub title: String,
    pub attributes: BTreeSet<String>,
    #[serde(default)]
    pub options: BTreeMap<String, Vec<String>>,
    pub price: Price,
    #[serde(default)]
    pub description: String,
}

impl Product {
    /// Lowercase tokens of title and attributes, used for search.
    pub fn search_tokens(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = tokenize(&self.title).collect();
        for a in &self.attributes {
            out.extend(tokenize(a));
        }
        out
    }

    /// Option group owning `value`, matched case-insensitively.
    pub fn option_group_of(&self, value: &str) -> Option<(&str, &str)> {
        self.options.iter().find_map(|(group, values)| {
            values
                .iter()
                .find(|v| v.eq_ignore_ascii_case(value))
                .map(|v| (group.as_str(), v.as_str()))
        })
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    products: Vec<Product>,
    index: BTreeMap<String, Vec<String>>,
}

impl Catalog {
    pub fn new(products: Vec<Product>) -> Result<Self, ShopError> {
        if products.is_empty() {
            return Err(ShopError::Schema {
                field: "products".into(),
                line: 1,
                message: "catalog must contain at least one product".into(),
            });
        }
        let mut seen = BTreeSet::new();
        for p in &products {
            if !seen.insert(p.id.as_str()) {
                return Err(ShopError::Schema {
                    field: "id".into(),
                    line: 0,
                    message: format!("duplicate product id {}", p.id),
                });
            }
        }
        let index = build_index(&products);
        Ok(Self { products, index })
    }

    pub fn from_json(text: &str) -> Result<Self, ShopError> {
        let products: Vec<Product> = serde_json::from_str(text).map_err(|e| ShopError::Schema {
            field: schema_field(&e),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::new(products).map_err(|e| match e {
            ShopError::Schema {
                field,
                line: 0,
                message,
            } => {
                let id = message.rsplit(' ').next().unwrap_or_default();
                ShopError::Schema {
                    line: line_of(text, &format!("\"{id}\"")),
                    field,
                    message,
                }
            }
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ShopError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ShopError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.products).expect("catalog serializes")
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Product> {
        self.products.iter().find(|p| p.id.eq_ignore_ascii_case(id))
    }

    pub fn index(&self) -> &BTreeMap<String, Vec<String>> {
        &self.index
    }

    /// Whether the stored index equals one rebuilt from the products.
    pub fn index_consistent(&self) -> bool {
        self.index == build_index(&self.products)
    }

    /// Products ranked by distinct query-token overlap with title and
    /// attributes (descending), then id (ascending). Zero-overlap products
    /// are excluded.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<String>, ShopError> {
        let terms: BTreeSet<String> = tokenize(query).collect();
        if terms.is_empty() {
            return Err(ShopError::EmptyQuery);
        }
        let mut overlap: BTreeMap<&str, usize> = BTreeMap::new();
        for term in &terms {
            for id in self.index.get(term).into_iter().flatten() {
                *overlap.entry(id.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = overlap.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(ranked.into_iter().take(k).map(|(id, _)| id.to_string()).collect())
    }
}

fn build_index(products: &[Product]) -> BTreeMap<String, Vec<String>> {
    let mut index: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in products {
        for t in p.search_tokens() {
            index.entry(t).or_default().push(p.id.clone());
        }
    }
    for ids in index.values_mut() {
        ids.sort();
    }
    index
}

fn schema_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "products".into())
}

fn line_of(text: &str, needle: &str) -> usize {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.contains(needle))
        .map(|(i, _)| i + 1)
        .last()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UserGoal {
    #[serde(default)]
    pub required_attributes: BTreeSet<String>,
    #[serde(default)]
    pub required_options: BTreeMap<String, String>,
    #[serde(default)]
    pub price_cap: Option<Price>,
}

impl UserGoal {
    pub fn validate(&self) -> Result<(), ShopError> {
        if self.required_attributes.is_empty()
            && self.required_options.is_empty()
            && self.price_cap.is_none()
        {
            return Err(ShopError::InvalidGoal("goal has no requirements".into()));
        }
        Ok(())
    }

    /// Instruction text in the shop's request style.
    pub fn instruction_text(&self) -> String {
        let mut text = String::from("i need");
        let attrs: Vec<&str> = self.required_attributes.iter().map(String::as_str).collect();
        if attrs.is_empty() {
            text.push_str(" a product");
        } else {
            text.push(' ');
            text.push_str(&attrs.join(" "));
        }
        if !self.required_options.is_empty() {
            let opts: Vec<String> = self
                .required_options
                .iter()
                .map(|(g, v)| format!("{g}: {v}"))
                .collect();
            text.push_str(" with ");
            text.push_str(&opts.join(", "));
        }
        if let Some(cap) = self.price_cap {
            text.push_str(&format!(", and price lower than {cap} dollars"));
        }
        text
    }

    /// Search query built from the goal's attribute and option tokens.
    pub fn query(&self) -> String {
        let mut terms: Vec<&str> = self.required_attributes.iter().map(String::as_str).collect();
        terms.extend(self.required_options.values().map(String::as_str));
        terms.join(" ")
    }

    /// Whether `product` with `chosen` options satisfies every requirement.
    pub fn satisfied_by(&self, product: &Product, chosen: &BTreeMap<String, String>) -> bool {
        self.required_attributes.is_subset(&product.attributes)
            && self
                .required_options
                .iter()
                .all(|(g, v)| chosen.get(g).is_some_and(|c| c.eq_ignore_ascii_case(v)))
            && self.price_cap.is_none_or(|cap| product.price <= cap)
    }
}

/// A goal with the instruction text it was phrased as.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRecord {
    pub instruction: String,
    #[serde(flatten)]
    pub goal: UserGoal,
}

impl GoalRecord {
    pub fn from_goal(goal: UserGoal) -> Self {
        Self {
            instruction: goal.instruction_text(),
            goal,
        }
    }
}

pub fn load_goals(path: impl AsRef<Path>) -> Result<Vec<GoalRecord>, ShopError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ShopError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let goals: Vec<GoalRecord> = serde_json::from_str(&text).map_err(|e| ShopError::Schema {
        field: schema_field(&e),
        line: e.line(),
        message: e.to_string(),
    })?;
    for g in &goals {
        g.goal.validate()?;
    }
    Ok(goals)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Phase {
    Search,
    Results { page: usize },
    ProductPage {
        id: String,
        chosen: BTreeMap<String, String>,
    },
    Done {
        id: String,
        chosen: BTreeMap<String, String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShopState {
    pub phase: Phase,
    pub last_query: String,
    pub results: Vec<String>,
}

impl Default for ShopState {
    fn default() -> Self {
        Self {
            phase: Phase::Search,
            last_query: String::new(),
            results: Vec::new(),
        }
    }
}

impl ShopState {
    pub fn purchased(&self) -> Option<(&str, &BTreeMap<String, String>)> {
        match &self.phase {
            Phase::Done { id, chosen } => Some((id.as_str(), chosen)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ShopAction {
    Search(String),
    Click(String),
}

fn parse_action(text: &str) -> Option<ShopAction> {
    let text = text.trim();
    let inner = |prefix: &str| {
        text.strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(']'))
            .map(|s| s.trim().to_string())
    };
    if let Some(q) = inner("search[") {
        return Some(ShopAction::Search(q));
    }
    inner("click[").map(ShopAction::Click)
}

/// Applies one action. Returns `None` when the action is not available in
/// the current phase; the state is then unchanged.
pub fn transition(state: &ShopState, action: &str, catalog: &Catalog) -> Option<ShopState> {
    let action = parse_action(action)?;
    let mut next = state.clone();
    match (&state.phase, action) {
        (Phase::Search, ShopAction::Search(q)) => {
            let results = catalog.search(&q, MAX_SEARCH_RESULTS).ok()?;
            next.last_query = q;
            next.results = results;
            next.phase = Phase::Results { page: 0 };
        }
        (Phase::Done { .. }, _) => return None,
        (_, ShopAction::Search(_)) => return None,
        (Phase::Search, ShopAction::Click(_)) => return None,
        (_, ShopAction::Click(target)) if target.eq_ignore_ascii_case("back to search") => {
            next.phase = Phase::Search;
            next.results.clear();
            next.last_query.clear();
        }
        (Phase::Results { page }, ShopAction::Click(target)) => {
            let page = *page;
            let pages = state.results.len().div_ceil(PAGE_SIZE);
            if target.eq_ignore_ascii_case("next >") && page + 1 < pages {
                next.phase = Phase::Results { page: page + 1 };
            } else if target.eq_ignore_ascii_case("< prev") && page > 0 {
                next.phase = Phase::Results { page: page - 1 };
            } else {
                let on_page = page_ids(&state.results, page);
                let id = on_page.iter().find(|id| id.eq_ignore_ascii_case(&target))?;
                next.phase = Phase::ProductPage {
                    id: id.to_string(),
                    chosen: BTreeMap::new(),
                };
            }
        }
        (Phase::ProductPage { id, chosen }, ShopAction::Click(target)) => {
            if target.eq_ignore_ascii_case("buy now") {
                next.phase = Phase::Done {
                    id: id.clone(),
                    chosen: chosen.clone(),
                };
            } else if target.eq_ignore_ascii_case("< prev") {
                let pos = state.results.iter().position(|r| r == id).unwrap_or(0);
                next.phase = Phase::Results {
                    page: pos / PAGE_SIZE,
                };
            } else {
                let product = catalog.get(id)?;
                let (group, value) = product.option_group_of(&target)?;
                let mut chosen = chosen.clone();
                chosen.insert(group.to_string(), value.to_string());
                next.phase = Phase::ProductPage {
                    id: id.clone(),
                    chosen,
                };
            }
        }
    }
    Some(next)
}

fn page_ids(results: &[String], page: usize) -> &[String] {
    let start = (page * PAGE_SIZE).min(results.len());
    let end = (start + PAGE_SIZE).min(results.len());
    &results[start..end]
}

/// Actions available in `state`, in a fixed order.
pub fn available_actions(state: &ShopState, catalog: &Catalog, goal: &UserGoal) -> Vec<String> {
    match &state.phase {
        Phase::Search => {
            let mut queries = vec![goal.query()];
            let attrs: Vec<&str> = goal.required_attributes.iter().map(String::as_str).collect();
            queries.push(attrs.join(" "));
            if let Some(last) = attrs.last() {
                queries.push(last.to_string());
            }
            let mut out: Vec<String> = Vec::new();
            for q in queries {
                if tokenize(&q).next().is_none() {
                    continue;
                }
                let a = format!("search[{q}]");
                if !out.contains(&a) {
                    out.push(a);
                }
            }
            out
        }
        Phase::Results { page } => {
            let mut out = vec!["click[back to search]".to_string()];
            if *page > 0 {
                out.push("click[< prev]".into());
            }
            if (page + 1) * PAGE_SIZE < state.results.len() {
                out.push("click[next >]".into());
            }
            out.extend(page_ids(&state.results, *page).iter().map(|id| format!("click[{id}]")));
            out
        }
        Phase::ProductPage { id, .. } => {
            let mut out = vec!["click[back to search]".to_string(), "click[< prev]".to_string()];
            if let Some(p) = catalog.get(id) {
                for values in p.options.values() {
                    out.extend(values.iter().map(|v| format!("click[{v}]")));
                }
            }
            out.push("click[buy now]".into());
            out
        }
        Phase::Done { .. } => Vec::new(),
    }
}

fn titled(product: &Product, chosen: &BTreeMap<String, String>) -> String {
    if chosen.is_empty() {
        product.title.clone()
    } else {
        let parts: Vec<String> = chosen.iter().map(|(g, v)| format!("{g} : {v}")).collect();
        format!("{} ({})", product.title, parts.join(", "))
    }
}

pub fn render(state: &ShopState, catalog: &Catalog, instruction: &str) -> String {
    let mut parts: Vec<String> = Vec::new();
    match &state.phase {
        Phase::Search => {
            parts.extend(["WebShop".into(), "Instruction:".into(), instruction.into(), "Search".into()]);
        }
        Phase::Results { page } => {
            parts.extend(["Instruction:".into(), instruction.into(), "Back to Search".into()]);
            parts.push(format!(
                "Page {} (Total results: {})",
                page + 1,
                state.results.len()
            ));
            if *page > 0 {
                parts.push("< Prev".into());
            }
            if (page + 1) * PAGE_SIZE < state.results.len() {
                parts.push("Next >".into());
            }
            for id in page_ids(&state.results, *page) {
                if let Some(p) = catalog.get(id) {
                    parts.push(p.id.clone());
                    parts.push(p.title.clone());
                    parts.push(format!("${}", p.price));
                }
            }
        }
        Phase::ProductPage { id, chosen } => {
            parts.extend([
                "Instruction:".into(),
                instruction.into(),
                "Back to Search".into(),
                "< Prev".into(),
            ]);
            if let Some(p) = catalog.get(id) {
                for (group, values) in &p.options {
                    parts.push(group.clone());
                    parts.extend(values.iter().cloned());
                }
                parts.push(titled(p, chosen));
                parts.push(format!("Price: ${}", p.price));
            }
            parts.extend(
                ["Rating: N.A.", "Description", "Features", "Reviews", "Buy Now"]
                    .map(String::from),
            );
        }
        Phase::Done { id, chosen } => {
            parts.push("Thank you for shopping with us!".into());
            if let Some(p) = catalog.get(id) {
                parts.push(format!("Purchased: {}", titled(p, chosen)));
                parts.push(format!("Price: ${}", p.price));
            }
        }
    }
    parts.join(" [SEP] ")
}

/// Matching reward of the final state against `goal`; 0 without a purchase.
pub fn matching_reward(goal: &UserGoal, state: &ShopState, catalog: &Catalog) -> Result<f64, ShopError> {
    let Some((id, chosen)) = state.purchased() else {
        return Ok(0.0);
    };
    let product = catalog
        .get(id)
        .ok_or_else(|| ShopError::UnknownProduct(id.to_string()))?;
    let attr_hits = goal.required_attributes.intersection(&product.attributes).count();
    let option_hits = goal
        .required_options
        .iter()
        .filter(|(g, v)| chosen.get(*g).is_some_and(|c| c.eq_ignore_ascii_case(v)))
        .count();
    let (price_term, price_den) = match goal.price_cap {
        Some(cap) => (usize::from(product.price <= cap), 1),
        None => (0, 0),
    };
    let den = goal.required_attributes.len() + goal.required_options.len() + price_den;
    if den == 0 {
        return Ok(0.0);
    }
    Ok((attr_hits + option_hits + price_term) as f64 / den as f64)
}

/// Purchase price; 0 without a purchase.
pub fn price_of(state: &ShopState, catalog: &Catalog) -> Result<Price, ShopError> {
    match state.purchased() {
        None => Ok(Price(0)),
        Some((id, _)) => catalog
            .get(id)
            .map(|p| p.price)
            .ok_or_else(|| ShopError::UnknownProduct(id.to_string())),
    }
}

#[derive(Debug, Clone)]
pub struct ShopEnv {
    catalog: Arc<Catalog>,
    goal: UserGoal,
    instruction: Instruction,
    state: ShopState,
}

impl ShopEnv {
    pub fn new(catalog: Arc<Catalog>, goal: UserGoal, instruction: Instruction) -> Result<Self, ShopError> {
        goal.validate()?;
        Ok(Self {
            catalog,
            goal,
            instruction,
            state: ShopState::default(),
        })
    }

    pub fn from_record(catalog: Arc<Catalog>, record: &GoalRecord, id: impl Into<String>) -> Result<Self, ShopError> {
        let instruction = Instruction::new(id, record.instruction.clone())
            .map_err(|e| ShopError::InvalidGoal(e.to_string()))?;
        Self::new(catalog, record.goal.clone(), instruction)
    }

    pub fn state(&self) -> &ShopState {
        &self.state
    }

    pub fn goal(&self) -> &UserGoal {
        &self.goal
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn matching_reward(&self) -> f64 {
        matching_reward(&self.goal, &self.state, &self.catalog).unwrap_or(0.0)
    }

    fn observe(&self) -> Observation {
        Observation::new(render(&self.state, &self.catalog, &self.instruction.text))
    }
}

impl PartialEq for ShopEnv {
    fn eq(&self, other: &Self) -> bool {
        self.goal == other.goal && self.instruction == other.instruction && self.state == other.state
    }
}

impl Environment for ShopEnv {
    fn instruction(&self) -> &Instruction {
        &self.instruction
    }

    fn reset(&mut self) -> Observation {
        self.state = ShopState::default();
        self.observe()
    }

    fn valid_actions(&self) -> Vec<Action> {
        available_actions(&self.state, &self.catalog, &self.goal)
            .into_iter()
            .filter_map(|a| Action::new(a).ok())
            .collect()
    }

    fn step(&mut self, action: &Action) -> Observation {
        match transition(&self.state, action.as_str(), &self.catalog) {
            Some(next) => {
                self.state = next;
                self.observe()
            }
            None => Observation::invalid_action(),
        }
    }

    fn is_terminal(&self) -> bool {
        matches!(self.state.phase, Phase::Done { .. })
    }

    fn oracle_outcome(&self) -> Option<TaskOutcome> {
        Some(TaskOutcome::new(self.matching_reward(), 1.0))
    }

    fn free_form_actions(&self) -> bool {
        // search[...] accepts any query text
        matches!(self.state.phase, Phase::Search)
    }

    fn check_action(&self, action: &str) -> Result<(), String> {
        match parse_action(action) {
            Some(ShopAction::Search(q)) if tokenize(&q).next().is_some() => Ok(()),
            Some(ShopAction::Click(t)) if !t.is_empty() => Ok(()),
            _ => Err(format!("`{action}` is not search[...] or click[...]")),
        }
    }

    fn price(&self) -> Option<f64> {
        price_of(&self.state, &self.catalog).ok().map(Price::dollars)
    }
}
