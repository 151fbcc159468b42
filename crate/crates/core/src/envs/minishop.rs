use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from;

use super::config::MiniShopConfig;
use super::{Outcome, Task};

pub const ATTRIBUTES: [&str; 3] = ["color", "size", "kind"];
const VALUE_NAMES: [[&str; 3]; 3] = [
    ["red", "blue", "green"],
    ["small", "medium", "large"],
    ["shirt", "shoe", "hat"],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Page {
    Home,
    Results(usize),
    Item(usize),
}

/// Toy shopping site: find and buy the item matching a target description.
///
/// The catalog holds distinct items over three attributes. The target is drawn at
/// reset and shown only on the home page. Actions are `search[attr=value]`,
/// `click[item]` (items listed on the current results page) and `buy` (on an
/// item page). Buying ends the episode with reward equal to the fraction of
/// target attributes the bought item matches.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniShop {
    config: MiniShopConfig,
    catalog: Vec<[usize; 3]>,
}

impl MiniShop {
    pub fn new(config: MiniShopConfig) -> Result<Self> {
        let v = config.values_per_attribute;
        if v < 2 {
            return Err(Error::Config(
                "minishop needs at least 2 values per attribute".into(),
            ));
        }
        if config.items == 0 || config.items > v * v * v {
            return Err(Error::Config(format!(
                "minishop items must be in 1..={}",
                v * v * v
            )));
        }
        if config.max_steps == 0 {
            return Err(Error::Config("minishop max_steps must be positive".into()));
        }
        let mut combos: Vec<usize> = (0..v * v * v).collect();
        combos.shuffle(&mut rng_from(config.catalog_seed, &[0xCA7A]));
        let mut chosen = combos[..config.items].to_vec();
        chosen.sort_unstable();
        let catalog = chosen
            .into_iter()
            .map(|c| [c / (v * v), c / v % v, c % v])
            .collect();
        Ok(MiniShop { config, catalog })
    }

    pub fn catalog(&self) -> &[[usize; 3]] {
        &self.catalog
    }

    fn items(&self) -> usize {
        self.catalog.len()
    }

    fn num_queries(&self) -> usize {
        3 * self.config.values_per_attribute
    }

    fn pages(&self) -> usize {
        1 + self.num_queries() + self.items()
    }

    pub fn search_action(&self, attribute: usize, value: usize) -> usize {
        attribute * self.config.values_per_attribute + value
    }

    pub fn click_action(&self, item: usize) -> usize {
        self.num_queries() + item
    }

    pub fn buy_action(&self) -> usize {
        self.num_queries() + self.items()
    }

    /// Hidden state for `target` on the home page.
    pub fn home_state(&self, target: usize) -> usize {
        target * self.pages()
    }

    pub fn target_of(&self, s: usize) -> usize {
        s / self.pages()
    }

    fn page(&self, s: usize) -> Page {
        let p = s % self.pages();
        let q = self.num_queries();
        if p == 0 {
            Page::Home
        } else if p <= q {
            Page::Results(p - 1)
        } else {
            Page::Item(p - 1 - q)
        }
    }

    fn page_index(&self, page: Page) -> usize {
        match page {
            Page::Home => 0,
            Page::Results(q) => 1 + q,
            Page::Item(i) => 1 + self.num_queries() + i,
        }
    }

    fn page_observation(&self, page: Page, target: usize) -> usize {
        match page {
            Page::Home => target,
            Page::Results(q) => self.items() + q,
            Page::Item(i) => self.items() + self.num_queries() + i,
        }
    }

    fn purchased_observation(&self) -> usize {
        2 * self.items() + self.num_queries()
    }

    fn matches(&self, item: usize, query: usize) -> bool {
        let v = self.config.values_per_attribute;
        self.catalog[item][query / v] == query % v
    }

    /// Fraction of the target's attributes shared by `item`.
    pub fn match_fraction(&self, item: usize, target: usize) -> f64 {
        let (a, b) = (self.catalog[item], self.catalog[target]);
        (0..3).filter(|&k| a[k] == b[k]).count() as f64 / 3.0
    }

    fn legal_on_page(&self, page: Page) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.num_queries()).collect();
        match page {
            Page::Home => {}
            Page::Results(q) => out.extend(
                (0..self.items())
                    .filter(|&i| self.matches(i, q))
                    .map(|i| self.click_action(i)),
            ),
            Page::Item(_) => out.push(self.buy_action()),
        }
        out
    }

    fn value_name(&self, attribute: usize, value: usize) -> String {
        if self.config.values_per_attribute <= 3 {
            VALUE_NAMES[attribute][value].to_string()
        } else {
            format!("v{value}")
        }
    }

    fn item_name(&self, item: usize) -> String {
        let a = self.catalog[item];
        (0..3)
            .map(|k| self.value_name(k, a[k]))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Task for MiniShop {
    fn num_states(&self) -> usize {
        self.items() * self.pages() + 1
    }

    fn num_observations(&self) -> usize {
        self.purchased_observation() + 1
    }

    fn num_actions(&self) -> usize {
        self.buy_action() + 1
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn is_terminal(&self, s: usize) -> bool {
        s == self.items() * self.pages()
    }

    fn initial_states(&self) -> Vec<usize> {
        (0..self.items()).map(|t| self.home_state(t)).collect()
    }

    fn initial_observation(&self, s: usize) -> usize {
        self.target_of(s)
    }

    fn legal(&self, s: usize) -> Vec<usize> {
        if self.is_terminal(s) {
            Vec::new()
        } else {
            self.legal_on_page(self.page(s))
        }
    }

    fn legal_for_observation(&self, obs: usize) -> Vec<usize> {
        let (n, q) = (self.items(), self.num_queries());
        if obs < n {
            self.legal_on_page(Page::Home)
        } else if obs < n + q {
            self.legal_on_page(Page::Results(obs - n))
        } else if obs < 2 * n + q {
            self.legal_on_page(Page::Item(obs - n - q))
        } else {
            Vec::new()
        }
    }

    fn transition(&self, s: usize, a: usize) -> Outcome {
        let target = self.target_of(s);
        let page = if a < self.num_queries() {
            Page::Results(a)
        } else if a < self.buy_action() {
            Page::Item(a - self.num_queries())
        } else {
            let Page::Item(item) = self.page(s) else {
                unreachable!("buy is only legal on item pages")
            };
            return Outcome {
                next: self.items() * self.pages(),
                reward: self.match_fraction(item, target),
                observation: self.purchased_observation(),
            };
        };
        Outcome {
            next: target * self.pages() + self.page_index(page),
            reward: 0.0,
            observation: self.page_observation(page, target),
        }
    }

    fn observation_name(&self, obs: usize) -> String {
        let (n, q) = (self.items(), self.num_queries());
        let v = self.config.values_per_attribute;
        if obs < n {
            format!("home: find {}", self.item_name(obs))
        } else if obs < n + q {
            let query = obs - n;
            format!(
                "results for {}={}",
                ATTRIBUTES[query / v],
                self.value_name(query / v, query % v)
            )
        } else if obs < 2 * n + q {
            format!("item {}", self.item_name(obs - n - q))
        } else {
            "purchased".into()
        }
    }

    fn action_name(&self, a: usize) -> String {
        let v = self.config.values_per_attribute;
        if a < self.num_queries() {
            format!(
                "search[{}={}]",
                ATTRIBUTES[a / v],
                self.value_name(a / v, a % v)
            )
        } else if a < self.buy_action() {
            format!("click[{}]", a - self.num_queries())
        } else {
            "buy".into()
        }
    }
}
