//! The model-output classification corpus: fixture names with their expected
//! id lists and classes.

use std::collections::BTreeSet;

pub struct Expected {
    pub name: &'static str,
    pub ids: &'static [&'static str],
}

pub const VALID_OUTPUTS: &[Expected] = &[
    Expected {
        name: "gpt4o",
        ids: &[
            "4a5dd98ef964a520c2bd1fe3",
            "3fd66200f964a520def11ee3",
            "4a3d735cf964a5204ba21fe3",
            "4d48864b551db1f722e9a330",
            "42ec1480f964a5209e261fe3",
        ],
    },
    Expected {
        name: "gpt4",
        ids: &[
            "4b7ecc2cf964a520420030e3",
            "41102700f964a520d60b1fe3",
            "4d531225f1b4a09039dee672",
            "4b705cd2f964a52052152de3",
            "4c176109f693b7139f0f5f54",
        ],
    },
    Expected {
        name: "gpt35",
        ids: &[
            "4b7ecc2cf964a520420030e3",
            "41102700f964a520d60b1fe3",
            "4d531225f1b4a09039dee672",
            "4b705cd2f964a52052152de3",
            "4c176109f693b7139f0f5f54",
        ],
    },
    Expected {
        name: "llama31_8b",
        ids: &[
            "4b9ae820f964a520c7e135e3",
            "4e89a96d4690c079de1c85f8",
            "4c3b49c54565e21eb775566a",
            "4bb1fa0bf964a52010af3ce3",
            "4e89a96d4690c079de1c85f8",
        ],
    },
    Expected {
        name: "llama3_70b_instruct",
        ids: &[
            "4be5dfe9910020a13ea2d314",
            "4c176109f693b7139f0f5f54",
            "4d531225f1b4a09039dee672",
            "4c176109f693b7139f0f5f54",
            "4b705cd2f964a52052152de3",
        ],
    },
    Expected {
        name: "llama3_8b_instruct",
        ids: &[
            "3fd66200f964a520cce51ee3",
            "4ce08a08ffcf370469b12082",
            "4ad507bff964a520660121e3",
            "4c881d60a0ffb60ccda81fc5",
        ],
    },
    Expected {
        name: "llama3_70b",
        ids: &[
            "4b4b6e24f964a5204f9b26e3",
            "4a8ddf35f964a520341120e3",
            "4cdac798d6656a315f36fc3e",
            "4cdac798d6656a315f36fc3e",
            "4cdac798d6656a315f36fc3e",
        ],
    },
    Expected {
        name: "llama3_8b",
        ids: &[
            "4dc326182271f27050f39597",
            "4bb1fa0bf964a52010af3ce3",
            "4bfaa7ed5ec320a1d2f28bd3",
            "4f7897ace4b0421083e165f8",
            "4ae0d39bf964a520e68221e3",
        ],
    },
    Expected {
        name: "llama2_chat_70b",
        ids: &[
            "4be5dfe9910020a13ea2d314",
            "4ada106af964a520ed1d21e3",
            "4cdf0650ffcf37041bd71682",
            "4c176109f693b7139f0f5f54",
            "4ba7ef65f964a520fabf39e3",
        ],
    },
    Expected {
        name: "llama2_chat_13b",
        ids: &[
            "4c176109f693b7139f0f5f54",
            "4d48864b551db1f722e9a330",
            "4ada106af964a520ed1d21e3",
            "4ba7ef65f964a520fabf39e3",
            "4be5dfe9910020a13ea2d314",
        ],
    },
    Expected {
        name: "llama2_chat_7b",
        ids: &[
            "4af5a46af964a520b5fa21e3",
            "4b0a9290f964a520352523e3",
            "4ad507bff964a520660121e3",
            "4c881d60a0ffb60ccda81fc5",
        ],
    },
    Expected {
        name: "llama2_70b",
        ids: &[
            "4c498ca56f1420a1c019c155",
            "4d531225f1b4a09039dee672",
            "4b7c698af964a520bc912fe3",
            "4d531225f1b4a09039dee672",
            "4b7c698af964a520bc912fe3",
        ],
    },
    Expected {
        name: "llama2_13b",
        ids: &[
            "41102700f964a520d60b1fe3",
            "41102700f964a520d60b1fe3",
            "4ada106af964a520ed1d21e3",
            "4d531225f1b4a09039dee672",
            "4d531225f1b4a09039dee672",
        ],
    },
    Expected {
        name: "llama2_7b",
        ids: &[
            "4b7ecc2cf964a520420030e3",
            "4b7ecc2cf964a520420030e3",
            "4b7ecc2cf964a520420030e3",
            "4b7ecc2cf964a520420030e3",
            "4b7ecc2cf964a520420030e3",
        ],
    },
    Expected {
        name: "mistral_7b",
        ids: &[
            "4be5dfe9910020a13ea2d314",
            "4a5dd98ef964a520c2bd1fe3",
            "4a43c0aef964a520c6a61fe3",
            "4a3d735cf964a5204ba21fe3",
            "4a3d735cf964a5204ba21fe3",
        ],
    },
];

pub const UNUSABLE_OUTPUTS: &[&str] = &[
    "dolly_2b",
    "dolly_3b",
    "dolly_7b",
    "dolly_12b",
    "gptj",
    "phi15",
    "phi2",
    "phi3",
];

pub const HALLUCINATED_FIXTURE: &str = "hallucinated_gpt35";

pub const HALLUCINATED_IDS: &[&str] = &[
    "4fd93beeb634312a5bc2ca50",
    "4f451eff19836ed001be34fe",
    "4a3f1f6af964a52095a11fe3",
    "4e81e4b65c5cb93d42acb10f",
    "4e81a1509adf897ae2fbed4f",
];

pub fn fixture(name: &str) -> String {
    let path = format!(
        "{}/tests/fixtures/model_outputs/{name}.txt",
        env!("CARGO_MANIFEST_DIR")
    );
    std::fs::read_to_string(path).unwrap()
}

/// Vocabulary covering every id the usable outputs mention — and none of the
/// hallucinated ones.
pub fn corpus_vocabulary() -> BTreeSet<String> {
    let vocab: BTreeSet<String> = VALID_OUTPUTS
        .iter()
        .flat_map(|e| e.ids.iter().map(|s| s.to_string()))
        .collect();
    for id in HALLUCINATED_IDS {
        assert!(
            !vocab.contains(*id),
            "vocabulary accidentally contains {id}"
        );
    }
    vocab
}
