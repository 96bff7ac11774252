//! Bundled toy corpora.

/// Royal and common people, each tied to gendered and class-specific
/// words, so that `king - man + woman` lands near `queen`.
pub const ANALOGY: &str = "\
king he king his king john king crown king throne king palace
queen she queen her queen mary queen crown queen throne queen palace
man he man his man john man farm man field man village
woman she woman her woman mary woman farm woman field woman village
";

/// The analogy query bundled with [`ANALOGY`]: `(a, b, c, expected)` for
/// `b - a + c ≈ expected`.
pub const ANALOGY_QUERY: (&str, &str, &str, &str) = ("man", "king", "woman", "queen");

/// Window for [`ANALOGY`]. Each line alternates a person with one of its
/// attributes, so only adjacent tokens are informative.
pub const ANALOGY_WINDOW: usize = 1;

/// Two words alternating.
pub const ALTERNATING: &str = "a b a b a b a b a b a b a b a b a b a b";

/// A short sentence repeated; every window recurs each pass.
pub const REPEATING: &str = "\
the quick brown fox jumps over the lazy dog
the quick brown fox jumps over the lazy dog
the quick brown fox jumps over the lazy dog
the quick brown fox jumps over the lazy dog
";

pub fn by_name(name: &str) -> Option<&'static str> {
    match name {
        "analogy" => Some(ANALOGY),
        "alternating" => Some(ALTERNATING),
        "repeating" => Some(REPEATING),
        _ => None,
    }
}

pub const NAMES: [&str; 3] = ["analogy", "alternating", "repeating"];
