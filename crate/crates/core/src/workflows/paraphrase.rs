use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const PARAPHRASE_WORDS: usize = 6;

/// Fixed list the login sentence is drawn from.
pub static WORD_LIST: [&str; 256] = [
    "apple", "river", "stone", "cloud", "maple", "tiger", "silver", "garden", "window", "candle",
    "orange", "valley", "meadow", "harbor", "pencil", "rocket", "forest", "summer", "winter", "autumn",
    "spring", "island", "planet", "bridge", "castle", "dragon", "feather", "glacier", "hammer", "jacket",
    "kettle", "ladder", "marble", "needle", "ocean", "pepper", "quartz", "rabbit", "saddle", "tunnel",
    "umbrella", "violet", "walnut", "yellow", "zebra", "anchor", "basket", "cactus", "desert", "engine",
    "falcon", "ginger", "helmet", "igloo", "jungle", "kitten", "lemon", "mirror", "nectar", "olive",
    "parrot", "quiver", "raven", "salmon", "tomato", "unicorn", "velvet", "wagon", "yogurt", "zipper",
    "amber", "beacon", "copper", "dolphin", "ember", "fabric", "granite", "horizon", "ivory", "jasmine",
    "kernel", "lantern", "mango", "nickel", "orchid", "pebble", "quill", "ribbon", "spider", "thunder",
    "update", "voyage", "willow", "yarn", "bamboo", "cobalt", "dune", "echo", "fern", "grove",
    "hazel", "indigo", "juniper", "koala", "lotus", "mosaic", "nutmeg", "oasis", "prairie", "quest",
    "ripple", "sierra", "timber", "urchin", "vapor", "whistle", "canyon", "breeze", "coral", "dawn",
    "eagle", "fjord", "gravel", "heron", "iris", "jewel", "kayak", "lilac", "meteor", "noble",
    "onyx", "panda", "quail", "reef", "sage", "tulip", "umber", "vessel", "wander", "xenon",
    "yonder", "zenith", "acorn", "blossom", "cedar", "daisy", "elm", "frost", "gull", "harvest",
    "inlet", "jade", "kiwi", "lagoon", "moss", "north", "opal", "pine", "quarry", "rose",
    "shell", "tide", "upland", "vine", "wheat", "yacht", "alpine", "bison", "comet", "delta",
    "flint", "geyser", "hollow", "icicle", "jetty", "knoll", "ledge", "mesa", "nomad", "orbit",
    "pilot", "quarter", "rover", "summit", "thistle", "utopia", "vault", "wren", "yodel", "azure",
    "bloom", "crest", "drift", "estuary", "fable", "glade", "haven", "ingot", "jolly", "keel",
    "lunar", "mint", "nova", "otter", "plume", "radar", "shore", "torch", "vista", "wisp",
    "apron", "banjo", "cider", "dusk", "easel", "fiddle", "gazebo", "husky", "inkwell", "jigsaw",
    "kiosk", "lily", "magnet", "napkin", "oyster", "paddle", "quiche", "raisin", "scarf", "teapot",
    "ukulele", "violin", "waffle", "zephyr", "badge", "cobble", "dingo", "elbow", "fossil", "goblet",
    "hiking", "bucket", "button", "carrot", "cherry", "circle", "cotton", "dinner", "doctor", "finger",
    "flower", "guitar", "honey", "insect", "letter", "lizard",
];

/// Six words drawn with replacement from [`WORD_LIST`], seeded.
///
/// The sentence is only shown to the user; nothing checks that the voice
/// sample actually contains it.
pub fn generate_paraphrase(seed: u64) -> String {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..PARAPHRASE_WORDS)
        .map(|_| *WORD_LIST.choose(&mut rng).expect("word list is non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}
