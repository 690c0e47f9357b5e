use crate::error::{Error, Result};

/// Relation names used as classification labels, in label-index order.
pub const LABEL_RELATIONS: [&str; 17] = [
    "Antonym",
    "AtLocation",
    "CapableOf",
    "Causes",
    "CausesDesire",
    "DistinctFrom",
    "FormOf",
    "HasContext",
    "HasPrerequisite",
    "HasProperty",
    "HasSubevent",
    "IsA",
    "MannerOf",
    "MotivatedByGoal",
    "PartOf",
    "Synonym",
    "UsedFor",
];

/// Every relation with a verbalization template: the 17 labels followed by
/// the context-only relations.
pub const KNOWN_RELATIONS: [(&str, &str); 33] = [
    ("Antonym", "is an antonym of"),
    ("AtLocation", "is in"),
    ("CapableOf", "is capable of"),
    ("Causes", "causes"),
    ("CausesDesire", "causes desire"),
    ("DistinctFrom", "is distinct from"),
    ("FormOf", "is a form of"),
    ("HasContext", "has context"),
    ("HasPrerequisite", "has prerequisite"),
    ("HasProperty", "is"),
    ("HasSubevent", "has subevent"),
    ("IsA", "is a"),
    ("MannerOf", "is a manner of"),
    ("MotivatedByGoal", "is motivated by"),
    ("PartOf", "is a part of"),
    ("Synonym", "is a synonym of"),
    ("UsedFor", "is used for"),
    ("CreatedBy", "is created by"),
    ("DefinedAs", "is defined as"),
    ("Desires", "desires"),
    ("Entails", "entails"),
    ("HasA", "has"),
    ("HasFirstSubevent", "starts with"),
    ("HasLastSubevent", "ends with"),
    ("InstanceOf", "is an instance of"),
    ("LocatedNear", "is near"),
    ("MadeOf", "is made of"),
    ("NotCapableOf", "is not capable of"),
    ("NotDesires", "does not desire"),
    ("NotHasProperty", "is not"),
    ("ReceivesAction", "receives action"),
    ("RelatedTo", "is related to"),
    ("SymbolOf", "is a symbol of"),
];

pub fn verbalize_relation(name: &str) -> Result<&'static str> {
    KNOWN_RELATIONS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::UnknownRelation {
            name: name.to_string(),
            known: KNOWN_RELATIONS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates() {
        assert_eq!(verbalize_relation("AtLocation").unwrap(), "is in");
        assert_eq!(verbalize_relation("IsA").unwrap(), "is a");
        assert_eq!(verbalize_relation("UsedFor").unwrap(), "is used for");
        assert_eq!(verbalize_relation("HasFirstSubevent").unwrap(), "starts with");
    }

    #[test]
    fn unknown_lists_known() {
        let err = verbalize_relation("Likes").unwrap_err().to_string();
        assert!(err.contains("Likes") && err.contains("AtLocation"));
    }

    #[test]
    fn labels_lead_the_table() {
        for (i, name) in LABEL_RELATIONS.iter().enumerate() {
            assert_eq!(KNOWN_RELATIONS[i].0, *name);
        }
    }
}
