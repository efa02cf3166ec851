use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{ConceptBank, Topic};

/// Maximum number of bank concepts placed into a rewrite prompt.
pub const PROMPT_CONCEPT_CAP: usize = 2000;
pub const PROMPT_TEMPLATE_VERSION: &str = "gar-t2t/v1";
/// Header line that precedes the concept listing, one concept per line.
pub const CONCEPT_SECTION_HEADER: &str = "Concept bank:";

/// Rewrite instruction for a language model that only knows the search
/// system's vocabulary through the concept listing.
pub fn build_t2t_prompt(topic: &Topic, bank: &ConceptBank, oov: &BTreeSet<String>) -> String {
    let concepts = bank.sample(PROMPT_CONCEPT_CAP);
    let mut p = String::new();
    let _ = writeln!(p, "[{PROMPT_TEMPLATE_VERSION}]");
    p.push_str(
        "You rewrite video search queries for a concept-based retrieval system.\n\
         Rephrase the query so that every content word is a concept from the concept bank below.\n\
         Replace each out-of-vocabulary term with its closest synonym in the bank and keep the meaning of the query.\n\
         Answer with the rewritten query only.\n\n",
    );
    let _ = writeln!(p, "Query: {}", topic.text);
    let oov_line = if oov.is_empty() {
        "(none)".to_string()
    } else {
        oov.iter().cloned().collect::<Vec<_>>().join(", ")
    };
    let _ = writeln!(p, "Out-of-vocabulary terms: {oov_line}");
    let _ = writeln!(p, "{CONCEPT_SECTION_HEADER}");
    for c in concepts {
        let _ = writeln!(p, "{c}");
    }
    p
}
