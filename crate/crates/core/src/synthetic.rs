//! A small constructed collection for exercising the whole pipeline: 50
//! shots, 10 topics and full relevance judgments.
//!
//! Every shot has two descriptions. Its concept annotation uses only bank
//! vocabulary and feeds the text store; its visual description is free text
//! and feeds a separate image store, standing in for an image encoder that
//! is not tied to the bank. Four topics are phrased with words the bank
//! lacks, and the substitution table maps those phrases to bank synonyms.

use std::collections::HashMap;
use std::sync::Arc;

use crate::embedding_index::EmbeddingStore;
use crate::generation::{
    token_hash_embed, ConceptBank, Generators, MockCaptioner, MockEmbedder, MockImageGenerator, MockRewriter, Topic,
};
use crate::pipeline::{PipelineClients, StoreSet};
use crate::trec_io::StratifiedQrels;

pub const SYNTHETIC_DIM: usize = 1024;

struct ShotSpec {
    id: &'static str,
    concepts: &'static str,
    visual: &'static str,
    topic: Option<u32>,
}

struct TopicSpec {
    id: u32,
    text: &'static str,
    caption: &'static str,
    oov: bool,
}

const TOPICS: &[TopicSpec] = &[
    TopicSpec {
        id: 901,
        text: "A dog running on a beach",
        caption: "a brown dog running on the sand near the sea",
        oov: false,
    },
    TopicSpec {
        id: 902,
        text: "A woman playing guitar on a stage",
        caption: "a woman playing an acoustic guitar on stage",
        oov: false,
    },
    TopicSpec {
        id: 903,
        text: "A red car driving on a road at night",
        caption: "a red car driving down a dark road at night",
        oov: false,
    },
    TopicSpec {
        id: 904,
        text: "A child riding a bicycle in a park",
        caption: "a young child riding a bicycle on a park path",
        oov: false,
    },
    TopicSpec {
        id: 905,
        text: "People eating at a table in a restaurant",
        caption: "people sitting at a table eating food in a restaurant",
        oov: false,
    },
    TopicSpec {
        id: 906,
        text: "A man cooking food in a kitchen",
        caption: "a man cooking food on a stove in a kitchen",
        oov: false,
    },
    TopicSpec {
        id: 907,
        text: "People standing in line outdoors",
        caption: "a crowd of people waiting outdoors on a street",
        oov: true,
    },
    TopicSpec {
        id: 908,
        text: "A man wearing a necktie",
        caption: "a man in a suit and a tie",
        oov: true,
    },
    TopicSpec {
        id: 909,
        text: "Two persons walking in a hallway",
        caption: "two persons walking down a corridor in a building",
        oov: true,
    },
    TopicSpec {
        id: 910,
        text: "A person sipping from a mug",
        caption: "a person drinking coffee from a cup",
        oov: true,
    },
];

const SUBSTITUTIONS: &[(&str, &str)] = &[
    ("standing in line", "lineup"),
    ("necktie", "tie"),
    ("hallway", "corridor"),
    ("sipping", "drinking"),
    ("mug", "cup"),
];

/// Bank concepts that no shot annotation happens to use.
const EXTRA_CONCEPTS: &[&str] = &["wearing", "hat", "glasses", "bag"];

const SHOTS: &[ShotSpec] = &[
    ShotSpec {
        id: "syn001",
        concepts: "dog running beach sea",
        visual: "a brown dog runs across the sand by the waves",
        topic: Some(901),
    },
    ShotSpec {
        id: "syn002",
        concepts: "dog beach sand",
        visual: "a dog playing on a sandy shore",
        topic: Some(901),
    },
    ShotSpec {
        id: "syn003",
        concepts: "dog running sea water",
        visual: "a wet dog running through shallow water at the coast",
        topic: Some(901),
    },
    ShotSpec {
        id: "syn004",
        concepts: "woman playing guitar stage",
        visual: "a female singer strums an acoustic guitar under spotlights",
        topic: Some(902),
    },
    ShotSpec {
        id: "syn005",
        concepts: "woman guitar stage crowd",
        visual: "a woman performs with a guitar in front of an audience",
        topic: Some(902),
    },
    ShotSpec {
        id: "syn006",
        concepts: "woman playing guitar",
        visual: "a woman holding a guitar and singing at a concert",
        topic: Some(902),
    },
    ShotSpec {
        id: "syn007",
        concepts: "red car driving road night",
        visual: "headlights of a red car moving along a dark highway",
        topic: Some(903),
    },
    ShotSpec {
        id: "syn008",
        concepts: "red car road night street",
        visual: "a red vehicle travelling on a street lit by lamps after dark",
        topic: Some(903),
    },
    ShotSpec {
        id: "syn009",
        concepts: "car driving night",
        visual: "a small red car driving at night in the rain",
        topic: Some(903),
    },
    ShotSpec {
        id: "syn010",
        concepts: "child riding bicycle park",
        visual: "a little boy pedals a bike along a park path",
        topic: Some(904),
    },
    ShotSpec {
        id: "syn011",
        concepts: "child bicycle grass park",
        visual: "a girl rides her bicycle on the grass",
        topic: Some(904),
    },
    ShotSpec {
        id: "syn012",
        concepts: "child riding bicycle",
        visual: "a kid on a bicycle with a helmet",
        topic: Some(904),
    },
    ShotSpec {
        id: "syn013",
        concepts: "people eating table restaurant",
        visual: "diners sharing a meal at a restaurant table",
        topic: Some(905),
    },
    ShotSpec {
        id: "syn014",
        concepts: "people eating food table",
        visual: "friends eating dinner together",
        topic: Some(905),
    },
    ShotSpec {
        id: "syn015",
        concepts: "people restaurant table",
        visual: "a family seated at a table in a busy restaurant",
        topic: Some(905),
    },
    ShotSpec {
        id: "syn016",
        concepts: "man cooking food kitchen",
        visual: "a chef frying vegetables in a pan",
        topic: Some(906),
    },
    ShotSpec {
        id: "syn017",
        concepts: "man cooking kitchen",
        visual: "a man stirring a pot in his kitchen",
        topic: Some(906),
    },
    ShotSpec {
        id: "syn018",
        concepts: "man food kitchen table",
        visual: "a cook preparing food on a kitchen counter",
        topic: Some(906),
    },
    ShotSpec {
        id: "syn019",
        concepts: "people lineup outdoors street",
        visual: "people standing in line on the sidewalk waiting",
        topic: Some(907),
    },
    ShotSpec {
        id: "syn020",
        concepts: "people lineup outdoors",
        visual: "a long line of people standing outside",
        topic: Some(907),
    },
    ShotSpec {
        id: "syn021",
        concepts: "crowd lineup shop",
        visual: "customers standing in line outside a shop",
        topic: Some(907),
    },
    ShotSpec {
        id: "syn022",
        concepts: "man tie suit office",
        visual: "a man in a suit wearing a striped necktie",
        topic: Some(908),
    },
    ShotSpec {
        id: "syn023",
        concepts: "man tie suit",
        visual: "a businessman adjusting his necktie",
        topic: Some(908),
    },
    ShotSpec {
        id: "syn024",
        concepts: "man tie smile",
        visual: "a smiling man wearing a red necktie",
        topic: Some(908),
    },
    ShotSpec {
        id: "syn025",
        concepts: "two persons walking corridor",
        visual: "two people walking down a long hallway",
        topic: Some(909),
    },
    ShotSpec {
        id: "syn026",
        concepts: "persons corridor building",
        visual: "a pair of colleagues strolling through a hallway",
        topic: Some(909),
    },
    ShotSpec {
        id: "syn027",
        concepts: "two persons corridor",
        visual: "two persons walking side by side in a hallway",
        topic: Some(909),
    },
    ShotSpec {
        id: "syn028",
        concepts: "person drinking cup coffee",
        visual: "a woman sipping coffee from a mug",
        topic: Some(910),
    },
    ShotSpec {
        id: "syn029",
        concepts: "person drinking cup",
        visual: "a man sipping tea from a white mug",
        topic: Some(910),
    },
    ShotSpec {
        id: "syn030",
        concepts: "person cup table",
        visual: "a person holding a mug and sipping",
        topic: Some(910),
    },
    ShotSpec {
        id: "syn031",
        concepts: "people walking outdoors street",
        visual: "pedestrians crossing a busy street",
        topic: None,
    },
    ShotSpec {
        id: "syn032",
        concepts: "people outdoors park",
        visual: "a group of friends relaxing in a park",
        topic: None,
    },
    ShotSpec {
        id: "syn033",
        concepts: "people outdoors crowd",
        visual: "a crowd gathered at an outdoor festival",
        topic: None,
    },
    ShotSpec {
        id: "syn034",
        concepts: "man suit office desk",
        visual: "a businessman typing at his desk",
        topic: None,
    },
    ShotSpec {
        id: "syn035",
        concepts: "man suit phone",
        visual: "a man in a suit talking on the phone",
        topic: None,
    },
    ShotSpec {
        id: "syn036",
        concepts: "man smile",
        visual: "a portrait of a man smiling",
        topic: None,
    },
    ShotSpec {
        id: "syn037",
        concepts: "two persons walking street",
        visual: "two friends walking along a street",
        topic: None,
    },
    ShotSpec {
        id: "syn038",
        concepts: "persons building stairs",
        visual: "people climbing the stairs of a building",
        topic: None,
    },
    ShotSpec {
        id: "syn039",
        concepts: "two persons talking",
        visual: "two persons talking at a desk",
        topic: None,
    },
    ShotSpec {
        id: "syn040",
        concepts: "person sitting desk computer",
        visual: "a person working on a laptop",
        topic: None,
    },
    ShotSpec {
        id: "syn041",
        concepts: "person",
        visual: "a person reading messages on a phone",
        topic: None,
    },
    ShotSpec {
        id: "syn042",
        concepts: "person sitting sofa",
        visual: "a person resting on a couch",
        topic: None,
    },
    ShotSpec {
        id: "syn043",
        concepts: "dog grass park",
        visual: "a dog sniffing the grass",
        topic: None,
    },
    ShotSpec {
        id: "syn044",
        concepts: "woman smile window",
        visual: "a woman smiling by a window",
        topic: None,
    },
    ShotSpec {
        id: "syn045",
        concepts: "car street",
        visual: "cars parked along a street in daylight",
        topic: None,
    },
    ShotSpec {
        id: "syn046",
        concepts: "bus street crowd",
        visual: "a city bus stopping for passengers",
        topic: None,
    },
    ShotSpec {
        id: "syn047",
        concepts: "tree sky",
        visual: "a tall tree against a blue sky",
        topic: None,
    },
    ShotSpec {
        id: "syn048",
        concepts: "snow stairs",
        visual: "snow covered steps",
        topic: None,
    },
    ShotSpec {
        id: "syn049",
        concepts: "water sea sky",
        visual: "calm water under a clear sky",
        topic: None,
    },
    ShotSpec {
        id: "syn050",
        concepts: "shop door",
        visual: "the entrance of a small shop",
        topic: None,
    },
];

/// The collection, its stores and judgments, and a mock stack for it.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub topics: Vec<Topic>,
    /// Ids of the topics phrased with out-of-bank words.
    pub oov_topics: Vec<u32>,
    pub bank: ConceptBank,
    pub text_store: Arc<EmbeddingStore>,
    pub image_store: Arc<EmbeddingStore>,
    /// One fully judged stratum per topic covering all shots.
    pub qrels: StratifiedQrels,
    /// (shot id, concept annotation, visual description) per shot.
    pub descriptions: Vec<(String, String, String)>,
}

fn store(dim: usize, pick: impl Fn(&ShotSpec) -> &'static str) -> EmbeddingStore {
    EmbeddingStore::build(
        SHOTS.iter().map(|s| {
            (
                s.id,
                token_hash_embed(pick(s), dim).expect("shot text embeds").into_inner(),
            )
        }),
        dim,
    )
    .expect("synthetic store is valid")
}

impl SyntheticCorpus {
    pub fn new() -> Self {
        Self::with_dim(SYNTHETIC_DIM)
    }

    pub fn with_dim(dim: usize) -> Self {
        let topics = TOPICS
            .iter()
            .map(|t| Topic::new(t.id, t.text).expect("synthetic topics are valid"))
            .collect();
        let bank = ConceptBank::from_terms(
            SHOTS
                .iter()
                .flat_map(|s| s.concepts.split_whitespace())
                .chain(EXTRA_CONCEPTS.iter().copied()),
            "synthetic",
        )
        .expect("bank is non-empty");
        let mut qrels = StratifiedQrels::new();
        for t in TOPICS {
            for s in SHOTS {
                qrels
                    .add(t.id, 1, s.id, i32::from(s.topic == Some(t.id)))
                    .expect("shot ids are unique");
            }
        }
        Self {
            topics,
            oov_topics: TOPICS.iter().filter(|t| t.oov).map(|t| t.id).collect(),
            bank,
            text_store: Arc::new(store(dim, |s| s.concepts)),
            image_store: Arc::new(store(dim, |s| s.visual)),
            qrels,
            descriptions: SHOTS
                .iter()
                .map(|s| (s.id.to_string(), s.concepts.to_string(), s.visual.to_string()))
                .collect(),
        }
    }

    pub fn stores(&self) -> StoreSet {
        StoreSet::single(self.text_store.clone()).with_image(self.image_store.clone())
    }

    pub fn substitutions() -> Vec<(&'static str, &'static str)> {
        SUBSTITUTIONS.to_vec()
    }

    pub fn clients(&self) -> PipelineClients {
        let captions: HashMap<String, String> = TOPICS
            .iter()
            .map(|t| (t.text.to_string(), t.caption.to_string()))
            .collect();
        PipelineClients {
            generators: Generators {
                rewriter: Arc::new(MockRewriter::new(SUBSTITUTIONS.iter().copied())),
                images: Arc::new(MockImageGenerator),
                captioner: Arc::new(MockCaptioner::with_fixtures(captions)),
            },
            embedder: Arc::new(MockEmbedder::new(self.text_store.dim())),
            bank: Arc::new(self.bank.clone()),
        }
    }
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self::new()
    }
}
