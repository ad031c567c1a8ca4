//! Seeded generator for the bundled toy catalog and its goals.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::shop::{Catalog, GoalRecord, Price, Product, UserGoal};

const NOUNS: &[&str] = &[
    "sneaker", "speaker", "backpack", "lamp", "mug", "headphones", "jacket", "bottle", "keyboard", "chair",
];
const ADJECTIVES: &[&str] = &[
    "canvas", "leather", "waterproof", "wireless", "portable", "bluetooth", "ergonomic", "vintage", "lightweight",
    "insulated", "foldable", "organic",
];
const BRANDS: &[&str] = &["Acme", "Nordic", "Vans", "Zephyr", "Kestrel", "Orbit", "Juniper"];
const COLORS: &[&str] = &["black", "white", "red", "blue", "green", "grey"];
const SIZES: &[&str] = &["small", "medium", "large"];

/// The two appendix-style speaker listings, kept verbatim so transcripts and
/// prices line up with the documented examples.
fn anchor_products() -> Vec<Product> {
    vec![
        Product {
            id: "B09STMXYR5".into(),
            title: "JUSTQIJUN 2pcs 1.5 Inch Bluetooth Radio Speaker Unit 4 Ohm 6W Sound Bar Horn".into(),
            attributes: ["bluetooth", "speaker", "4ohm", "6w", "long-lasting"].map(String::from).into(),
            options: BTreeMap::from([("color".to_string(), vec!["40mm 4 ohm 6w".to_string()])]),
            price: Price(2836),
            description: "2pcs speaker unit for soundbar".into(),
        },
        Product {
            id: "B09SWKXBY5".into(),
            title: "JUSTQIJUN 2pcs Full Range 2 Inch Speaker 15W DIY Soundbar Boombox Unit".into(),
            attributes: ["bluetooth", "speaker", "4ohm", "20w"].map(String::from).into(),
            options: BTreeMap::from([(
                "color".to_string(),
                vec!["4 ohm 10w".to_string(), "4 ohm 15w".to_string(), "4 ohm 20w".to_string()],
            )]),
            price: Price(4266),
            description: "full range speaker unit".into(),
        },
    ]
}

fn product_id(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    let tail: String = (0..8)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
        .collect();
    format!("B0{tail}")
}

/// `n` products (the two anchors included), deterministic in `seed`.
pub fn synthetic_catalog(n: usize, seed: u64) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut products = anchor_products();
    let mut ids: BTreeSet<String> = products.iter().map(|p| p.id.clone()).collect();
    while products.len() < n.max(products.len()) {
        let noun = *NOUNS.choose(&mut rng).unwrap();
        let mut adjectives: Vec<&str> = ADJECTIVES.choose_multiple(&mut rng, 2).copied().collect();
        adjectives.sort();
        let brand = *BRANDS.choose(&mut rng).unwrap();
        let n_colors = rng.random_range(1..=3);
        let mut colors: Vec<String> = COLORS
            .choose_multiple(&mut rng, n_colors)
            .map(|s| s.to_string())
            .collect();
        colors.sort();
        let mut options = BTreeMap::from([("color".to_string(), colors)]);
        if rng.random_bool(0.5) {
            let mut sizes: Vec<String> = SIZES.iter().map(|s| s.to_string()).collect();
            sizes.shuffle(&mut rng);
            let n_sizes = rng.random_range(1..=2);
            sizes.truncate(n_sizes);
            sizes.sort();
            options.insert("size".to_string(), sizes);
        }
        let id = loop {
            let id = product_id(&mut rng);
            if ids.insert(id.clone()) {
                break id;
            }
        };
        let mut attributes: BTreeSet<String> = adjectives.iter().map(|s| s.to_string()).collect();
        attributes.insert(noun.to_string());
        products.push(Product {
            title: format!("{brand} {} {} {noun}", adjectives[0], adjectives[1]),
            description: format!("A {} {noun} by {brand}.", adjectives.join(" ")),
            id,
            attributes,
            options,
            price: Price(rng.random_range(500..10000)),
        });
    }
    Catalog::new(products).expect("generated catalog is valid")
}

/// `m` goals, each built from a product so at least one purchase satisfies it.
pub fn synthetic_goals(catalog: &Catalog, m: usize, seed: u64) -> Vec<GoalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let p = catalog.products().choose(&mut rng).unwrap();
            GoalRecord::from_goal(goal_for(p, &mut rng))
        })
        .collect()
}

/// A goal satisfied by `product` with one option chosen per required group.
pub fn goal_for<R: Rng>(product: &Product, rng: &mut R) -> UserGoal {
    let attrs: Vec<&String> = product.attributes.iter().collect();
    let take = rng.random_range(1..=attrs.len().min(2));
    let required_attributes: BTreeSet<String> =
        attrs.choose_multiple(rng, take).map(|s| s.to_string()).collect();
    let mut required_options = BTreeMap::new();
    if let Some((group, values)) = product.options.iter().next() {
        if let Some(v) = values.choose(rng) {
            required_options.insert(group.clone(), v.clone());
        }
    }
    // cap rounded up to the next multiple of 10 dollars above the price
    let cap = (product.price.0 / 1000 + 1) * 1000;
    UserGoal {
        required_attributes,
        required_options,
        price_cap: Some(Price(cap)),
    }
}
