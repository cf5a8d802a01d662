//! Synthetic corpus whose label signal is reachable only through readers.
//!
//! Every user has one emotion and authors posts of that emotion. A post is
//! `prefix` shared-vocabulary words followed by words from its emotion's
//! private vocabulary. With an encoder that keeps fewer than `prefix + 1`
//! rows, the content matrix never sees the private words, while similarity
//! ranking does, so readers are routed to same-emotion authors and their
//! simulated feedback carries the label.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{Corpus, FollowEdge, Post, UserProfile};
use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::tape::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedLayout {
    pub users: usize,
    pub per_class: usize,
    pub prefix: usize,
    pub private_words: usize,
    pub shared_vocab: usize,
    pub private_vocab: usize,
    pub follows_per_user: usize,
    pub seed: u64,
}

impl Default for PlantedLayout {
    fn default() -> Self {
        Self {
            users: 30,
            per_class: 40,
            prefix: 15,
            private_words: 8,
            shared_vocab: 300,
            private_vocab: 12,
            follows_per_user: 2,
            seed: 0,
        }
    }
}

const GENDERS: [&str; 2] = ["male", "female"];
const REGIONS: [&str; 5] = ["north", "south", "east", "west", "central"];
const TAGS: [&str; 6] = ["music", "sports", "travel", "food", "tech", "film"];

pub fn user_emotion(index: usize) -> Emotion {
    Emotion::ALL[index % NUM_EMOTIONS]
}

pub fn planted_corpus(layout: &PlantedLayout) -> Corpus {
    assert!(layout.users >= NUM_EMOTIONS, "need at least one user per emotion");
    let mut rng = seeded_rng(layout.seed);
    let mut corpus = Corpus::default();
    let ids: Vec<String> = (0..layout.users).map(|i| format!("u{i:03}")).collect();
    for id in &ids {
        let u = UserProfile::new(id.clone(), GENDERS.choose(&mut rng).unwrap(), REGIONS.choose(&mut rng).unwrap(), TAGS.choose(&mut rng).unwrap());
        corpus.users.insert(id.clone(), u);
    }
    let groups: Vec<Vec<usize>> = (0..NUM_EMOTIONS).map(|c| (0..layout.users).filter(|&i| i % NUM_EMOTIONS == c).collect()).collect();
    for (c, members) in groups.iter().enumerate() {
        let emotion = Emotion::ALL[c];
        for j in 0..layout.per_class {
            let author = &ids[members[j % members.len()]];
            let mut words: Vec<String> = (0..layout.prefix).map(|_| format!("w{}", rng.random_range(0..layout.shared_vocab))).collect();
            words.extend((0..layout.private_words).map(|_| format!("g{c}v{}", rng.random_range(0..layout.private_vocab))));
            let post_id = format!("p{c}{j:04}");
            corpus.posts.insert(
                post_id.clone(),
                Post {
                    post_id: post_id.clone(),
                    author_id: author.clone(),
                    text: words.join(" "),
                    emotion_label: Some(emotion),
                    is_augmented: false,
                },
            );
            corpus.users.get_mut(author).expect("author").history.push(post_id);
        }
    }
    for members in &groups {
        for &i in members {
            let others: Vec<usize> = members.iter().copied().filter(|&j| j != i).collect();
            for &j in others.choose_multiple(&mut rng, layout.follows_per_user.min(others.len())) {
                corpus.follows.insert(FollowEdge {
                    follower_id: ids[i].clone(),
                    followee_id: ids[j].clone(),
                });
            }
        }
    }
    corpus
}
