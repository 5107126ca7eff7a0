//! Scenario categories: what to look for, described declaratively.
//!
//! A category names a list of participant roles and an ordered sequence of
//! items. Each item constrains tag dimensions of the ego vehicle, of each
//! role, and of the environment with a small expression language; a scenario
//! instance is a time span that can be cut into one contiguous segment per
//! item such that every constraint of item `j` holds throughout segment `j`.
//!
//! Categories are JSON documents:
//!
//! ```json
//! {
//!   "name": "cut_in",
//!   "roles": ["other"],
//!   "items": [
//!     {
//!       "ego": { "lateral_activity": "following_lane" },
//!       "other": {
//!         "lateral_activity": { "any_of": ["changing_lane_left",
//!                                          "changing_lane_right"] },
//!         "lead_vehicle": "no_leader"
//!       },
//!       "environment": { "on_highway": "highway" }
//!     }
//!   ]
//! }
//! ```
//!
//! An expression is a bare tag value, `{"any_of": [...]}`, `{"all_of":
//! [...]}` or `{"not": ...}`, nested freely. Expressions are evaluated
//! three-valued: where a subject carries no tag in a dimension the
//! constraint is neither true nor false, and only a definite `true`
//! satisfies an item. In particular `{"not": ...}` over an untagged sample
//! is unknown, not true: an unobserved object matches nothing.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Tag, TagDimension};

/// One constraint expression over a single tag dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum TagExpr {
    /// The tag equals this value.
    Is(Tag),
    /// At least one sub-expression holds.
    AnyOf(Vec<TagExpr>),
    /// Every sub-expression holds.
    AllOf(Vec<TagExpr>),
    /// The sub-expression definitely does not hold.
    Not(Box<TagExpr>),
}

impl TagExpr {
    /// Three-valued evaluation against the tag actually present (`None` when
    /// the subject carries no tag in this dimension at the sample).
    pub fn eval(&self, actual: Option<Tag>) -> Option<bool> {
        match self {
            TagExpr::Is(expected) => actual.map(|tag| tag == *expected),
            TagExpr::Not(inner) => inner.eval(actual).map(|b| !b),
            TagExpr::AllOf(parts) => {
                let mut unknown = false;
                for part in parts {
                    match part.eval(actual) {
                        Some(false) => return Some(false),
                        None => unknown = true,
                        Some(true) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(true)
                }
            }
            TagExpr::AnyOf(parts) => {
                let mut unknown = false;
                for part in parts {
                    match part.eval(actual) {
                        Some(true) => return Some(true),
                        None => unknown = true,
                        Some(false) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(false)
                }
            }
        }
    }

    /// Whether the constraint definitely holds. Unknown counts as unmet.
    pub fn matches(&self, actual: Option<Tag>) -> bool {
        self.eval(actual) == Some(true)
    }
}

/// The constraints of one item for one subject: dimension to expression.
pub type SubjectConstraints = Vec<(TagDimension, TagExpr)>;

/// One item of a category's sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CategoryItem {
    pub ego: SubjectConstraints,
    /// Constraints per role, in the order the category declares its roles.
    pub roles: Vec<SubjectConstraints>,
    pub environment: SubjectConstraints,
}

/// A scenario category: named roles and an ordered item sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Category {
    pub name: String,
    pub role_names: Vec<String>,
    pub items: Vec<CategoryItem>,
}

impl Category {
    pub fn from_json_str(text: &str) -> Result<Category> {
        parse_category(text)
    }

    pub fn from_json_file(path: &Path) -> Result<Category> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_category(&text)
    }

    /// Dimensions this category constrains on the ego vehicle.
    pub fn ego_dimensions_used(&self) -> BTreeSet<TagDimension> {
        self.items
            .iter()
            .flat_map(|item| item.ego.iter().map(|(d, _)| *d))
            .collect()
    }

    /// Dimensions this category constrains on any role.
    pub fn role_dimensions_used(&self) -> BTreeSet<TagDimension> {
        self.items
            .iter()
            .flat_map(|item| item.roles.iter().flatten().map(|(d, _)| *d))
            .collect()
    }

    /// Dimensions this category constrains on the environment.
    pub fn environment_dimensions_used(&self) -> BTreeSet<TagDimension> {
        self.items
            .iter()
            .flat_map(|item| item.environment.iter().map(|(d, _)| *d))
            .collect()
    }
}

fn bad(context: &str, message: impl std::fmt::Display) -> Error {
    Error::Category(format!("{context}: {message}"))
}

fn parse_expr(value: &serde_json::Value, dimension: TagDimension, context: &str) -> Result<TagExpr> {
    match value {
        serde_json::Value::String(token) => {
            let tag = Tag::parse(dimension, token).map_err(|e| bad(context, e))?;
            Ok(TagExpr::Is(tag))
        }
        serde_json::Value::Object(map) => {
            if map.len() != 1 {
                return Err(bad(
                    context,
                    "expression object must have exactly one of `any_of`, `all_of`, `not`",
                ));
            }
            let (key, inner) = map.iter().next().expect("len checked");
            match key.as_str() {
                "any_of" | "all_of" => {
                    let parts = inner.as_array().ok_or_else(|| {
                        bad(context, format!("`{key}` expects an array of expressions"))
                    })?;
                    if parts.is_empty() {
                        return Err(bad(context, format!("`{key}` must not be empty")));
                    }
                    let parsed: Result<Vec<TagExpr>> = parts
                        .iter()
                        .map(|part| parse_expr(part, dimension, context))
                        .collect();
                    let parsed = parsed?;
                    Ok(if key == "any_of" {
                        TagExpr::AnyOf(parsed)
                    } else {
                        TagExpr::AllOf(parsed)
                    })
                }
                "not" => Ok(TagExpr::Not(Box::new(parse_expr(
                    inner, dimension, context,
                )?))),
                other => Err(bad(
                    context,
                    format!("unknown expression operator `{other}`"),
                )),
            }
        }
        other => Err(bad(
            context,
            format!("expected a tag value or an expression object, got {other}"),
        )),
    }
}

fn parse_constraints(
    value: &serde_json::Value,
    context: &str,
) -> Result<SubjectConstraints> {
    let map = value
        .as_object()
        .ok_or_else(|| bad(context, "expected an object of dimension constraints"))?;
    let mut constraints = Vec::with_capacity(map.len());
    for (dim_name, expr_value) in map {
        let dimension = TagDimension::parse(dim_name)
            .ok_or_else(|| bad(context, format!("unknown tag dimension `{dim_name}`")))?;
        let expr = parse_expr(
            expr_value,
            dimension,
            &format!("{context}, dimension `{dim_name}`"),
        )?;
        constraints.push((dimension, expr));
    }
    Ok(constraints)
}

fn parse_category(text: &str) -> Result<Category> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Category(format!("invalid JSON: {e}")))?;
    let root = doc
        .as_object()
        .ok_or_else(|| Error::Category("top level must be an object".into()))?;
    for key in root.keys() {
        if !matches!(key.as_str(), "name" | "roles" | "items") {
            return Err(Error::Category(format!("unknown top-level key `{key}`")));
        }
    }
    let name = root
        .get("name")
        .and_then(|n| n.as_str())
        .ok_or_else(|| Error::Category("missing string field `name`".into()))?
        .to_string();
    if name.is_empty() {
        return Err(Error::Category("`name` must not be empty".into()));
    }
    let roles_value = root
        .get("roles")
        .and_then(|r| r.as_array())
        .ok_or_else(|| Error::Category("missing array field `roles`".into()))?;
    let mut role_names = Vec::with_capacity(roles_value.len());
    for role in roles_value {
        let role = role
            .as_str()
            .ok_or_else(|| Error::Category("role names must be strings".into()))?;
        if role.is_empty() || role == "ego" || role == "environment" {
            return Err(Error::Category(format!(
                "role name `{role}` is reserved or empty"
            )));
        }
        if role_names.iter().any(|r| r == role) {
            return Err(Error::Category(format!("duplicate role name `{role}`")));
        }
        role_names.push(role.to_string());
    }
    let items_value = root
        .get("items")
        .and_then(|i| i.as_array())
        .ok_or_else(|| Error::Category("missing array field `items`".into()))?;
    if items_value.is_empty() {
        return Err(Error::Category("`items` must not be empty".into()));
    }
    let mut items = Vec::with_capacity(items_value.len());
    for (index, item_value) in items_value.iter().enumerate() {
        let context = format!("item {index}");
        let map = item_value
            .as_object()
            .ok_or_else(|| bad(&context, "expected an object"))?;
        let mut item = CategoryItem {
            roles: vec![Vec::new(); role_names.len()],
            ..CategoryItem::default()
        };
        for (key, constraints_value) in map {
            let constraints =
                parse_constraints(constraints_value, &format!("{context}, subject `{key}`"))?;
            match key.as_str() {
                "ego" => item.ego = constraints,
                "environment" => item.environment = constraints,
                role => {
                    let slot = role_names.iter().position(|r| r == role).ok_or_else(|| {
                        bad(&context, format!("`{role}` is not a declared role"))
                    })?;
                    item.roles[slot] = constraints;
                }
            }
        }
        items.push(item);
    }
    Ok(Category {
        name,
        role_names,
        items,
    })
}

/// Source of the bundled cut-in category.
pub const CUT_IN_JSON: &str = include_str!("../../../categories/cut_in.json");
/// Source of the bundled overtaking category.
pub const OVERTAKING_JSON: &str = include_str!("../../../categories/overtaking.json");

/// The categories shipped with the crate.
pub fn builtin_categories() -> Vec<Category> {
    [CUT_IN_JSON, OVERTAKING_JSON]
        .iter()
        .map(|text| Category::from_json_str(text).expect("bundled categories are valid"))
        .collect()
}

/// Look up a bundled category by name.
pub fn builtin_category(name: &str) -> Option<Category> {
    builtin_categories().into_iter().find(|c| c.name == name)
}
