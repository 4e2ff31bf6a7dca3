use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cantonese speech attributes: manner, aspiration and place of articulation
/// for the 19 initial consonants, plus one shared class for vowels.
/// Format: `category<TAB>attribute<TAB>phone,phone,...`.
pub const CANTONESE_TABLE: &str = "\
Manner\tPlosive\tp,pʰ,t,tʰ,k,kʰ,kʷ,kʷʰ
Manner\tNasal\tm,n,ŋ
Manner\tAffricate\tts,tsʰ
Manner\tFricative\ts,f,h
Manner\tGlide\tj,w
Manner\tLiquid\tl
Aspiration\tAspirated\tpʰ,tʰ,kʰ,kʷʰ,tsʰ
Aspiration\tUnaspirated\tp,t,k,kʷ,ts
Place\tAlveolar\tt,tʰ,ts,tsʰ,s,j
Place\tLateral\tl
Place\tLabial\tp,pʰ,w,m
Place\tVelar\tk,kʰ,ŋ
Place\tLabio-velar\tkʷ,kʷʰ
Place\tLabio-dental\tf
Place\tVocal\th
Vowel\tVowel/Semi-vowel\taː,iː,ɛː,e,œː,œ,ɔː,o,uː,yː,ɐ,ɪ,ɵ,ʊ
";

const CANTONESE_PHONES: [&str; 33] = [
    "p", "pʰ", "t", "tʰ", "k", "kʰ", "kʷ", "kʷʰ", "m", "n", "ŋ", "ts", "tsʰ", "s", "f", "h", "j", "w",
    "l", "aː", "iː", "ɛː", "e", "œː", "œ", "ɔː", "o", "uː", "yː", "ɐ", "ɪ", "ɵ", "ʊ",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttributeCategory {
    Manner,
    Aspiration,
    Place,
    Vowel,
}

impl AttributeCategory {
    /// Categories in which a consonant carries at most one attribute.
    pub const CONSONANTAL: [AttributeCategory; 3] =
        [AttributeCategory::Manner, AttributeCategory::Aspiration, AttributeCategory::Place];
}

impl fmt::Display for AttributeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributeCategory::Manner => "Manner",
            AttributeCategory::Aspiration => "Aspiration",
            AttributeCategory::Place => "Place",
            AttributeCategory::Vowel => "Vowel",
        })
    }
}

impl FromStr for AttributeCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "manner" => Ok(Self::Manner),
            "aspiration" => Ok(Self::Aspiration),
            "place" => Ok(Self::Place),
            "vowel" | "vowel/semi-vowel" => Ok(Self::Vowel),
            other => Err(Error::malformed("attribute table", format!("unknown category {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub category: AttributeCategory,
}

/// Ordered, duplicate-free phone labels. The order fixes the output layout of
/// the phone classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneInventory {
    phones: Vec<String>,
}

impl PhoneInventory {
    pub fn new<S: Into<String>>(phones: impl IntoIterator<Item = S>) -> Result<Self> {
        let phones: Vec<String> = phones.into_iter().map(Into::into).collect();
        let mut seen = std::collections::BTreeSet::new();
        for p in &phones {
            if p.is_empty() {
                return Err(Error::InvalidArgument("empty phone label".into()));
            }
            if !seen.insert(p.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate phone label {p:?}")));
            }
        }
        if phones.is_empty() {
            return Err(Error::TooFew { what: "phones", need: 1, got: 0 });
        }
        Ok(Self { phones })
    }

    /// The 33 Cantonese phones: 19 initial consonants and 14 vowels.
    pub fn cantonese() -> Self {
        Self::new(CANTONESE_PHONES).expect("built-in inventory is valid")
    }

    pub fn phones(&self) -> &[String] {
        &self.phones
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn index_of(&self, phone: &str) -> Option<usize> {
        self.phones.iter().position(|p| p == phone)
    }
}

/// Validated phone-to-attribute mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMap {
    attributes: Vec<Attribute>,
    inventory: PhoneInventory,
    /// Sorted attribute indices per phone, in inventory order.
    phone_attributes: Vec<Vec<usize>>,
}

/// Parses and validates an attribute table against a phone inventory.
pub fn build_attribute_map(definition: &str, inventory: &PhoneInventory) -> Result<AttributeMap> {
    let mut attributes: Vec<Attribute> = Vec::new();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); inventory.len()];
    for (lineno, raw) in definition.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::malformed(
                "attribute table",
                format!("line {}: expected 3 tab-separated fields, got {}", lineno + 1, fields.len()),
            ));
        }
        let category: AttributeCategory = fields[0].parse()?;
        let name = fields[1].trim().to_string();
        if attributes.iter().any(|a| a.name == name) {
            return Err(Error::malformed("attribute table", format!("attribute {name} listed twice")));
        }
        let index = attributes.len();
        attributes.push(Attribute { name, category });
        for phone in fields[2].split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let pi = inventory
                .index_of(phone)
                .ok_or_else(|| Error::UnknownPhone(phone.to_string()))?;
            members[pi].push(index);
        }
    }
    if attributes.is_empty() {
        return Err(Error::TooFew { what: "attributes", need: 1, got: 0 });
    }
    for (pi, attrs) in members.iter_mut().enumerate() {
        let phone = &inventory.phones()[pi];
        attrs.sort_unstable();
        attrs.dedup();
        if attrs.is_empty() {
            return Err(Error::InvalidArgument(format!("phone {phone} has no attribute")));
        }
        let is_vowel = attrs.iter().any(|&a| attributes[a].category == AttributeCategory::Vowel);
        if is_vowel && attrs.len() > 1 {
            let other = attrs
                .iter()
                .find(|&&a| attributes[a].category != AttributeCategory::Vowel)
                .copied()
                .unwrap_or(attrs[1]);
            return Err(Error::AttributeConflict {
                phone: phone.clone(),
                category: "vowel".into(),
                first: attributes[attrs[0]].name.clone(),
                second: attributes[other].name.clone(),
            });
        }
        for cat in AttributeCategory::CONSONANTAL {
            let in_cat: Vec<usize> = attrs.iter().copied().filter(|&a| attributes[a].category == cat).collect();
            if in_cat.len() > 1 {
                return Err(Error::AttributeConflict {
                    phone: phone.clone(),
                    category: cat.to_string(),
                    first: attributes[in_cat[0]].name.clone(),
                    second: attributes[in_cat[1]].name.clone(),
                });
            }
        }
    }
    Ok(AttributeMap {
        attributes,
        inventory: inventory.clone(),
        phone_attributes: members,
    })
}

impl AttributeMap {
    /// The built-in Cantonese map over [`PhoneInventory::cantonese`].
    pub fn cantonese() -> Self {
        build_attribute_map(CANTONESE_TABLE, &PhoneInventory::cantonese()).expect("built-in table is valid")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn attributes_of(&self, phone: &str) -> Result<&[usize]> {
        let pi = self
            .inventory
            .index_of(phone)
            .ok_or_else(|| Error::UnknownPhone(phone.to_string()))?;
        Ok(&self.phone_attributes[pi])
    }

    pub fn attribute_names_of(&self, phone: &str) -> Result<Vec<&str>> {
        Ok(self
            .attributes_of(phone)?
            .iter()
            .map(|&a| self.attributes[a].name.as_str())
            .collect())
    }

    /// 0/1 attribute targets of one phone.
    pub fn targets(&self, phone: &str) -> Result<Vec<f64>> {
        let mut t = vec![0.0; self.attributes.len()];
        for &a in self.attributes_of(phone)? {
            t[a] = 1.0;
        }
        Ok(t)
    }

    fn category_value(&self, attrs: &[usize], cat: AttributeCategory) -> Option<usize> {
        attrs.iter().copied().find(|&a| self.attributes[a].category == cat)
    }

    pub fn is_vowel(&self, phone: &str) -> Result<bool> {
        Ok(self
            .category_value(self.attributes_of(phone)?, AttributeCategory::Vowel)
            .is_some())
    }

    /// Number of consonantal categories (manner, aspiration, place) in which
    /// two phones differ; a missing value counts as a value of its own.
    pub fn category_distance(&self, a: &str, b: &str) -> Result<usize> {
        let (aa, bb) = (self.attributes_of(a)?, self.attributes_of(b)?);
        Ok(AttributeCategory::CONSONANTAL
            .iter()
            .filter(|&&c| self.category_value(aa, c) != self.category_value(bb, c))
            .count())
    }

    pub fn consonants(&self) -> Vec<&str> {
        self.inventory
            .phones()
            .iter()
            .filter(|p| !self.is_vowel(p).unwrap_or(true))
            .map(String::as_str)
            .collect()
    }

    /// Consonants differing from `phone` in exactly one consonantal category.
    pub fn confusable_partners(&self, phone: &str) -> Result<Vec<&str>> {
        if self.is_vowel(phone)? {
            return Err(Error::NoConfusablePartner(phone.to_string()));
        }
        let partners: Vec<&str> = self
            .consonants()
            .into_iter()
            .filter(|&c| c != phone && self.category_distance(phone, c).ok() == Some(1))
            .collect();
        if partners.is_empty() {
            return Err(Error::NoConfusablePartner(phone.to_string()));
        }
        Ok(partners)
    }

    /// Serialises back to the tab-separated table format.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (ai, a) in self.attributes.iter().enumerate() {
            let phones: Vec<&str> = self
                .inventory
                .phones()
                .iter()
                .zip(&self.phone_attributes)
                .filter(|(_, attrs)| attrs.contains(&ai))
                .map(|(p, _)| p.as_str())
                .collect();
            out.push_str(&format!("{}\t{}\t{}\n", a.category, a.name, phones.join(",")));
        }
        out
    }

    /// Attribute names grouped by category, in table order.
    pub fn by_category(&self) -> BTreeMap<AttributeCategory, Vec<&str>> {
        let mut m: BTreeMap<AttributeCategory, Vec<&str>> = BTreeMap::new();
        for a in &self.attributes {
            m.entry(a.category).or_default().push(&a.name);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(map: &AttributeMap, phone: &str) -> Vec<String> {
        let mut v: Vec<String> = map.attribute_names_of(phone).unwrap().into_iter().map(String::from).collect();
        v.sort();
        v
    }

    #[test]
    fn default_shape() {
        let map = AttributeMap::cantonese();
        assert_eq!(map.num_attributes(), 16);
        assert_eq!(map.inventory().len(), 33);
        assert_eq!(map.consonants().len(), 19);
        let cats = map.by_category();
        assert_eq!(cats[&AttributeCategory::Manner].len(), 6);
        assert_eq!(cats[&AttributeCategory::Aspiration].len(), 2);
        assert_eq!(cats[&AttributeCategory::Place].len(), 7);
        assert_eq!(cats[&AttributeCategory::Vowel].len(), 1);
    }

    #[test]
    fn p_and_l() {
        let map = AttributeMap::cantonese();
        assert_eq!(names(&map, "p"), ["Labial", "Plosive", "Unaspirated"]);
        assert_eq!(names(&map, "l"), ["Lateral", "Liquid"]);
    }

    #[test]
    fn double_place_rejected() {
        let table = format!("{CANTONESE_TABLE}Place\tExtra\ts\n");
        let err = build_attribute_map(&table, &PhoneInventory::cantonese()).unwrap_err();
        assert!(matches!(err, Error::AttributeConflict { ref phone, .. } if phone == "s"), "{err}");
    }

    #[test]
    fn unknown_phone_rejected() {
        let table = format!("{CANTONESE_TABLE}Manner\tTrill\tr\n");
        assert!(matches!(
            build_attribute_map(&table, &PhoneInventory::cantonese()),
            Err(Error::UnknownPhone(p)) if p == "r"
        ));
    }

    #[test]
    fn vowel_with_consonant_attribute_rejected() {
        let table = CANTONESE_TABLE.replace("Place\tVocal\th", "Place\tVocal\th,aː");
        assert!(matches!(
            build_attribute_map(&table, &PhoneInventory::cantonese()),
            Err(Error::AttributeConflict { .. })
        ));
    }

    #[test]
    fn missing_phone_rejected() {
        let table = CANTONESE_TABLE.replace("Manner\tLiquid\tl\n", "").replace("Place\tLateral\tl\n", "");
        assert!(build_attribute_map(&table, &PhoneInventory::cantonese()).is_err());
    }

    #[test]
    fn table_roundtrip() {
        let map = AttributeMap::cantonese();
        let again = build_attribute_map(&map.to_table(), map.inventory()).unwrap();
        assert_eq!(map, again);
    }

    #[test]
    fn partners() {
        let map = AttributeMap::cantonese();
        let t = map.confusable_partners("t").unwrap();
        assert!(t.contains(&"k") && t.contains(&"tʰ") && t.contains(&"ts") && t.contains(&"p"));
        assert!(matches!(map.confusable_partners("l"), Err(Error::NoConfusablePartner(_))));
        assert!(matches!(map.confusable_partners("aː"), Err(Error::NoConfusablePartner(_))));
        assert_eq!(map.category_distance("tsʰ", "s").unwrap(), 2);
    }
}
