//! Word banks and sentence generators for synthetic captions, transcripts
//! and quotes.
//!
//! [`VISUAL_WORDS`] and [`SPEECH_WORDS`] are disjoint; the synthetic
//! retrieval corpus draws only from them. The English sentence generators
//! also use [`SHARED_WORDS`], which appear in both registers.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::Rng;

/// Words of plain visual descriptions.
pub const VISUAL_WORDS: &[&str] = &[
    "man", "woman", "girl", "boy", "dog", "cat", "chef", "crowd", "player", "team", "band",
    "car", "horse", "guitar", "ball", "kitchen", "stage", "beach", "park", "road", "field",
    "river", "street", "table", "camera", "screen", "judges", "contestant", "audience",
    "singer", "dancer", "reporter", "soldier", "baby", "children", "bicycle", "truck",
    "train", "boat", "plane", "mountain", "snow", "water", "food", "plate", "knife", "shirt",
    "dress", "hat", "room", "house", "tree", "flower", "sky", "rides", "riding", "cooks",
    "cooking", "plays", "playing", "runs", "running", "dances", "dancing", "sings",
    "singing", "drives", "driving", "walks", "walking", "talking", "jumps", "jumping",
    "swims", "swimming", "shows", "showing", "holds", "holding", "wearing", "sitting",
    "standing", "red", "blue", "green", "white", "black", "small", "large", "young", "old",
    "game", "show", "video", "cartoon", "animated", "football", "basketball", "tennis",
    "concert", "news", "studio", "interview", "outside", "inside", "near", "front", "down",
    "on", "at", "with", "while", "an", "are", "someone", "people", "two", "group",
];

/// Words of spoken language and quotations.
pub const SPEECH_WORDS: &[&str] = &[
    "i", "you", "we", "they", "my", "your", "our", "so", "well", "yeah", "okay", "right",
    "think", "know", "believe", "mean", "want", "need", "going", "gonna", "really", "very",
    "just", "never", "always", "maybe", "because", "but", "if", "when", "will", "would",
    "should", "can", "could", "must", "shall", "not", "dont", "cant", "thank", "thanks",
    "please", "sorry", "hello", "everybody", "everyone", "tonight", "today", "tomorrow",
    "yesterday", "year", "time", "life", "love", "freedom", "country", "nation", "future",
    "government", "money", "work", "vote", "law", "citizens", "together", "dream", "hope",
    "fight", "win", "lose", "rebuild", "promise", "truth", "honest", "friends", "family",
    "remember", "forget", "feel", "happy", "proud", "important", "thing", "things", "lot",
    "actually", "basically", "totally", "guys", "here", "there", "what", "why", "how",
    "yes", "no", "oh", "um", "uh", "like", "said", "tell", "told", "ask", "answer", "say",
    "surrender", "courage", "justice", "peace", "war", "victory", "history", "everything",
    "nothing", "something", "me", "us", "them", "him", "her", "he", "she", "anyway", "indeed",
];

/// Function words used by both registers in the English generators.
pub const SHARED_WORDS: &[&str] = &["the", "a", "to", "and", "of", "in", "is", "this", "for"];

const SUBJECTS: &[&str] = &[
    "a man", "a woman", "a girl", "a boy", "a dog", "a cat", "a chef", "a crowd",
    "a player", "a band", "a singer", "a reporter", "two people", "a group of children",
    "a young woman", "an old man", "a contestant", "a dancer",
];
const ACTIONS: &[&str] = &[
    "is riding", "is cooking", "is playing", "is running", "is dancing", "is singing",
    "is driving", "is walking", "is talking to", "is jumping over", "is swimming in",
    "is holding", "is wearing", "is sitting on", "is standing near", "rides", "cooks",
    "plays", "shows",
];
const OBJECTS: &[&str] = &[
    "a horse", "the judges", "a guitar", "a ball", "some food", "a car", "a bicycle",
    "a red dress", "a white shirt", "a large plate", "the audience", "a small boat",
    "the camera", "a truck", "a tree", "the river",
];
const PLACES: &[&str] = &[
    "on a game show", "in a kitchen", "on stage", "on the beach", "in a park",
    "on the road", "in a field", "in a studio", "at a concert", "on the street",
    "in a room", "near the mountain", "in the snow", "outside a house", "",
];
const SPEECH_OPENERS: &[&str] = &[
    "so", "well", "i think", "you know", "okay so", "yeah", "and i believe", "honestly",
    "i mean", "we all know", "thank you", "look",
];
const SPEECH_BODIES: &[&str] = &[
    "we will rebuild this country together",
    "i never thought it would happen to me",
    "we are going to win this vote",
    "it is really important for the future",
    "thank you all for coming tonight",
    "i just want to say how proud i am",
    "we must never forget our history",
    "they told me i could not do it",
    "this is the best day of my life",
    "you have to believe in your dream",
    "we need to work together for peace",
    "i love you guys so much",
    "nobody knows what the government will do",
    "the truth is we can not afford it",
    "we shall fight for freedom and justice",
    "it is time to tell the truth",
    "i hope my family is watching",
    "we have a promise to keep",
    "honestly i feel very happy today",
    "what we do now will matter for years",
];
const SPEECH_CLOSERS: &[&str] = &[
    "", "right", "you know", "thank you", "okay", "and that is it", "believe me",
    "for everyone", "for the people", "yeah",
];

/// One English visual caption such as "a girl is talking to the judges on a
/// game show".
pub fn english_caption(rng: &mut Rng) -> String {
    let parts = [
        *SUBJECTS.choose(rng).unwrap(),
        *ACTIONS.choose(rng).unwrap(),
        *OBJECTS.choose(rng).unwrap(),
        *PLACES.choose(rng).unwrap(),
    ];
    join_nonempty(&parts)
}

/// One English spoken sentence, as an ASR transcript would render it.
pub fn english_speech(rng: &mut Rng) -> String {
    let n_bodies = rng.gen_range(1..=2);
    let mut parts = vec![*SPEECH_OPENERS.choose(rng).unwrap()];
    parts.extend(SPEECH_BODIES.choose_multiple(rng, n_bodies).copied());
    parts.push(SPEECH_CLOSERS.choose(rng).unwrap());
    join_nonempty(&parts)
}

/// A short quotable sentence (without quotation marks).
pub fn english_quote(rng: &mut Rng) -> String {
    let body = *SPEECH_BODIES.choose(rng).unwrap();
    let opener = *SPEECH_OPENERS.choose(rng).unwrap();
    let closer = *SPEECH_CLOSERS.choose(rng).unwrap();
    match rng.gen_range(0..4) {
        0 => body.to_owned(),
        1 => join_nonempty(&[opener, body]),
        2 => join_nonempty(&[body, closer]),
        _ => join_nonempty(&[opener, body, closer]),
    }
}

fn join_nonempty(parts: &[&str]) -> String {
    parts
        .iter()
        .filter(|p| !p.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

/// `n` distinct sentences from `make`; gives up after `n * 200` draws and
/// returns what it has.
pub fn distinct(n: usize, rng: &mut Rng, mut make: impl FnMut(&mut Rng) -> String) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n.saturating_mul(200) {
        if out.len() == n {
            break;
        }
        let s = make(rng);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gr",
    "kl", "pr", "st", "tr", "zh",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

/// A pronounceable nonsense word of 3-4 syllables.
pub fn pseudo_word(rng: &mut Rng) -> String {
    let syllables = rng.gen_range(3..=4);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(NUCLEI.choose(rng).unwrap());
    }
    if rng.gen_bool(0.5) {
        w.push_str(ONSETS.choose(rng).unwrap());
    }
    w
}
