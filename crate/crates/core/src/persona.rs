//! Attribute taxonomy, the persona grid, and identity-clause rendering.
//!
//! A persona holds one slot per [`Category`]. Each slot is either a named
//! attribute value from the taxonomy or `Base`, meaning the category is not
//! mentioned at all. The persona with every slot at `Base` is the base state.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Demographic category. Declaration order is the rendering order of the
/// identity clause (age, culture, gender).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Age,
    Culture,
    Gender,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Age, Category::Culture, Category::Gender];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Age => "age",
            Category::Culture => "culture",
            Category::Gender => "gender",
        }
    }

    /// Noun used in the identity clause ("0-17 age category").
    fn clause_suffix(self) -> &'static str {
        match self {
            Category::Age => "age category",
            Category::Culture => "culture",
            Category::Gender => "gender",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "age" => Ok(Category::Age),
            "culture" => Ok(Category::Culture),
            "gender" => Ok(Category::Gender),
            other => Err(Error::Argument(format!("unknown category {other:?}"))),
        }
    }
}

/// A category together with one of its values; `value == None` is `Base`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Attribute {
    pub category: Category,
    pub value: Option<String>,
}

impl Attribute {
    pub fn new(category: Category, value: impl Into<String>) -> Self {
        Attribute {
            category,
            value: Some(value.into()),
        }
    }

    pub fn base(category: Category) -> Self {
        Attribute {
            category,
            value: None,
        }
    }

    pub fn is_base(&self) -> bool {
        self.value.is_none()
    }

    /// Display label: the value name, or `Base`.
    pub fn label(&self) -> &str {
        self.value.as_deref().unwrap_or(BASE_LABEL)
    }
}

const BASE_LABEL: &str = "Base";

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.category, self.label())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (cat, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("attribute {s:?} is not category=value")))?;
        let category: Category = cat.parse()?;
        let value = value.trim();
        if value.is_empty() {
            return Err(Error::Argument(format!("attribute {s:?} has an empty value")));
        }
        Ok(if value == BASE_LABEL {
            Attribute::base(category)
        } else {
            Attribute::new(category, value)
        })
    }
}

impl TryFrom<String> for Attribute {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Attribute> for String {
    fn from(a: Attribute) -> String {
        a.to_string()
    }
}

/// One value (or `Base`) per category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Persona {
    pub age: Option<String>,
    pub culture: Option<String>,
    pub gender: Option<String>,
}

impl Persona {
    pub fn base() -> Self {
        Persona::default()
    }

    pub fn new(age: Option<&str>, gender: Option<&str>, culture: Option<&str>) -> Self {
        Persona {
            age: age.map(str::to_owned),
            culture: culture.map(str::to_owned),
            gender: gender.map(str::to_owned),
        }
    }

    pub fn is_base(&self) -> bool {
        self.age.is_none() && self.culture.is_none() && self.gender.is_none()
    }

    pub fn slot(&self, category: Category) -> Option<&str> {
        match category {
            Category::Age => self.age.as_deref(),
            Category::Culture => self.culture.as_deref(),
            Category::Gender => self.gender.as_deref(),
        }
    }

    pub fn attribute(&self, category: Category) -> Attribute {
        Attribute {
            category,
            value: self.slot(category).map(str::to_owned),
        }
    }

    /// Copy of `self` with `attribute`'s category replaced.
    pub fn with(&self, attribute: &Attribute) -> Persona {
        let mut p = self.clone();
        let slot = match attribute.category {
            Category::Age => &mut p.age,
            Category::Culture => &mut p.culture,
            Category::Gender => &mut p.gender,
        };
        *slot = attribute.value.clone();
        p
    }

    pub fn non_base_count(&self) -> usize {
        Category::ALL
            .iter()
            .filter(|c| self.slot(**c).is_some())
            .count()
    }

    /// Stable textual key: `age|culture|gender` with `Base` for empty slots.
    pub fn key(&self) -> String {
        Category::ALL
            .iter()
            .map(|c| self.slot(*c).unwrap_or(BASE_LABEL))
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn from_key(key: &str) -> Result<Persona> {
        let parts: Vec<&str> = key.split('|').collect();
        if parts.len() != 3 {
            return Err(Error::Argument(format!("persona key {key:?} needs 3 fields")));
        }
        let slot = |s: &str| (s != BASE_LABEL).then(|| s.to_owned());
        Ok(Persona {
            age: slot(parts[0]),
            culture: slot(parts[1]),
            gender: slot(parts[2]),
        })
    }
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Identity clause for a persona, or `None` for the base state.
///
/// Clauses are ordered age, culture, gender; `Base` slots are dropped. Two
/// clauses are joined with " and ", three with ", " and a final " and ".
pub fn render(persona: &Persona) -> Option<String> {
    let clauses: Vec<String> = Category::ALL
        .iter()
        .filter_map(|c| persona.slot(*c).map(|v| format!("{v} {}", c.clause_suffix())))
        .collect();
    match clauses.as_slice() {
        [] => None,
        [one] => Some(one.clone()),
        [init @ .., last] => Some(format!("{} and {last}", init.join(", "))),
    }
}

/// Attribute values per category. Order inside each list is significant:
/// it drives grid order and table row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub age: Vec<String>,
    pub culture: Vec<String>,
    pub gender: Vec<String>,
}

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.toml");

#[derive(Deserialize)]
struct TaxonomyFile {
    age: Section,
    culture: Section,
    gender: Section,
}

#[derive(Deserialize)]
struct Section {
    values: Vec<String>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy::from_toml(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }
}

impl Taxonomy {
    pub fn new(age: Vec<String>, culture: Vec<String>, gender: Vec<String>) -> Result<Self> {
        let t = Taxonomy {
            age,
            culture,
            gender,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: TaxonomyFile =
            toml::from_str(text).map_err(|e| Error::Validation(format!("taxonomy: {e}")))?;
        Taxonomy::new(file.age.values, file.culture.values, file.gender.values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Taxonomy::from_toml(&text)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for cat in Category::ALL {
            let values = self.values(cat);
            if values.is_empty() {
                return Err(Error::Validation(format!("category {cat} has no values")));
            }
            for v in values {
                let v = v.trim();
                if v.is_empty() || v == BASE_LABEL || v.contains(['|', '=', ',', '\n']) {
                    return Err(Error::Validation(format!(
                        "invalid {cat} value {v:?}"
                    )));
                }
                if !seen.insert(v.to_owned()) {
                    return Err(Error::Validation(format!(
                        "value {v:?} appears more than once across categories"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn values(&self, category: Category) -> &[String] {
        match category {
            Category::Age => &self.age,
            Category::Culture => &self.culture,
            Category::Gender => &self.gender,
        }
    }

    /// Named attributes of a category, in taxonomy order (no `Base`).
    pub fn attributes(&self, category: Category) -> Vec<Attribute> {
        self.values(category)
            .iter()
            .map(|v| Attribute::new(category, v.clone()))
            .collect()
    }

    /// Values of a category followed by `Base`.
    fn slots(&self, category: Category) -> Vec<Option<String>> {
        self.values(category)
            .iter()
            .cloned()
            .map(Some)
            .chain(std::iter::once(None))
            .collect()
    }

    /// Every combination of one slot per category, `Base` included.
    /// Ordered culture-major, then gender, then age; `Base` is last in each.
    pub fn build_grid(&self) -> Vec<Persona> {
        let mut grid = Vec::new();
        for culture in self.slots(Category::Culture) {
            for gender in self.slots(Category::Gender) {
                for age in self.slots(Category::Age) {
                    grid.push(Persona {
                        age: age.clone(),
                        culture: culture.clone(),
                        gender: gender.clone(),
                    });
                }
            }
        }
        grid
    }

    /// One persona per named value of `category`, all other slots `Base`.
    pub fn isolation_set(&self, category: Category) -> Vec<Persona> {
        self.attributes(category)
            .iter()
            .map(|a| Persona::base().with(a))
            .collect()
    }

    /// Base persona plus every isolation persona, age then culture then gender.
    pub fn isolation_personas(&self) -> Vec<Persona> {
        std::iter::once(Persona::base())
            .chain(Category::ALL.iter().flat_map(|c| self.isolation_set(*c)))
            .collect()
    }

    /// Combinations of the two categories other than `category`, `Base` included.
    pub fn contexts(&self, category: Category) -> Vec<Persona> {
        let others: Vec<Category> = Category::ALL
            .iter()
            .copied()
            .filter(|c| *c != category)
            .collect();
        let mut out = Vec::new();
        for a in self.slots(others[0]) {
            for b in self.slots(others[1]) {
                let p = Persona::base()
                    .with(&Attribute {
                        category: others[0],
                        value: a.clone(),
                    })
                    .with(&Attribute {
                        category: others[1],
                        value: b,
                    });
                out.push(p);
            }
        }
        out
    }

    /// Position of an attribute in taxonomy order; `Base` sorts last.
    pub fn position(&self, attribute: &Attribute) -> usize {
        let values = self.values(attribute.category);
        match &attribute.value {
            Some(v) => values.iter().position(|x| x == v).unwrap_or(values.len() + 1),
            None => values.len(),
        }
    }

    pub fn contains(&self, attribute: &Attribute) -> bool {
        match &attribute.value {
            None => true,
            Some(v) => self.values(attribute.category).contains(v),
        }
    }

    /// Every named attribute in (category, taxonomy) order.
    pub fn all_attributes(&self) -> Vec<Attribute> {
        Category::ALL
            .iter()
            .flat_map(|c| self.attributes(*c))
            .collect()
    }
}

/// Convenience wrappers over the default taxonomy.
pub fn build_grid() -> Vec<Persona> {
    Taxonomy::default().build_grid()
}

pub fn isolation_set(category: Category) -> Vec<Persona> {
    Taxonomy::default().isolation_set(category)
}
