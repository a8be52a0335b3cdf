//! English noun inflection for entity labels: articles, number words,
//! plural and singular forms.

const NUMBER_WORDS: [&str; 10] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

// (singular, plural) pairs that the suffix rules get wrong.
const IRREGULAR: &[(&str, &str)] = &[
    ("person", "people"),
    ("bus", "buses"),
    ("man", "men"),
    ("woman", "women"),
    ("child", "children"),
    ("mouse", "mice"),
    ("goose", "geese"),
    ("foot", "feet"),
    ("tooth", "teeth"),
    ("ox", "oxen"),
    ("knife", "knives"),
    ("wife", "wives"),
    ("leaf", "leaves"),
    ("wolf", "wolves"),
    ("loaf", "loaves"),
    ("shelf", "shelves"),
    ("calf", "calves"),
    ("potato", "potatoes"),
    ("tomato", "tomatoes"),
];

// Same in both numbers.
const INVARIANT: &[&str] = &["sheep", "broccoli", "deer", "fish", "bison", "moose", "skis", "scissors"];

// Singular nouns that end in `s` and must not be stripped.
const SINGULAR_S: &[&str] = &[
    "bus", "glass", "grass", "class", "bass", "cactus", "octopus", "hippopotamus", "walrus",
    "lens", "bonus", "virus", "tennis", "chess",
];

pub fn number_word(n: u8) -> Option<&'static str> {
    NUMBER_WORDS.get(usize::from(n).checked_sub(1)?).copied()
}

pub fn parse_number_word(word: &str) -> Option<u8> {
    NUMBER_WORDS
        .iter()
        .position(|w| *w == word)
        .map(|i| i as u8 + 1)
}

/// "an" before a vowel-initial label, "a" otherwise.
pub fn indefinite_article(label: &str) -> &'static str {
    match label.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

pub fn with_article(label: &str) -> String {
    format!("{} {}", indefinite_article(label), label)
}

/// Pluralizes the last word of a label ("teddy bear" → "teddy bears").
pub fn pluralize(label: &str) -> String {
    map_last_word(label, pluralize_word)
}

/// Inverse of [`pluralize`] for the labels it produces, and a best-effort
/// singular for detector output.
pub fn singularize(label: &str) -> String {
    map_last_word(label, singularize_word)
}

/// "one dog", "two dogs".
pub fn counted(label: &str, n: u8) -> String {
    let word = number_word(n).map(str::to_string).unwrap_or_else(|| n.to_string());
    if n == 1 {
        format!("{word} {label}")
    } else {
        format!("{word} {}", pluralize(label))
    }
}

fn map_last_word(label: &str, f: fn(&str) -> String) -> String {
    match label.rsplit_once(' ') {
        Some((head, last)) => format!("{head} {}", f(last)),
        None => f(label),
    }
}

fn pluralize_word(w: &str) -> String {
    if INVARIANT.contains(&w) {
        return w.to_string();
    }
    if let Some((_, p)) = IRREGULAR.iter().find(|(s, _)| *s == w) {
        return (*p).to_string();
    }
    if w.ends_with('s')
        || w.ends_with('x')
        || w.ends_with('z')
        || w.ends_with("ch")
        || w.ends_with("sh")
    {
        return format!("{w}es");
    }
    if let Some(stem) = w.strip_suffix('y') {
        if stem.chars().last().is_some_and(|c| !"aeiou".contains(c)) {
            return format!("{stem}ies");
        }
    }
    format!("{w}s")
}

fn singularize_word(w: &str) -> String {
    if INVARIANT.contains(&w) || SINGULAR_S.contains(&w) {
        return w.to_string();
    }
    if let Some((s, _)) = IRREGULAR.iter().find(|(_, p)| *p == w) {
        return (*s).to_string();
    }
    if IRREGULAR.iter().any(|(s, _)| *s == w) {
        return w.to_string();
    }
    if let Some(stem) = w.strip_suffix("ies") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    for suffix in ["sses", "shes", "ches", "xes", "zes"] {
        if w.ends_with(suffix) {
            return w[..w.len() - 2].to_string();
        }
    }
    if w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") {
        return w.to_string();
    }
    match w.strip_suffix('s') {
        Some(stem) if stem.len() >= 2 => stem.to_string(),
        _ => w.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn articles() {
        assert_eq!(with_article("cat"), "a cat");
        assert_eq!(with_article("apple"), "an apple");
        assert_eq!(with_article("umbrella"), "an umbrella");
        assert_eq!(with_article("banana"), "a banana");
    }

    #[test]
    fn counting() {
        assert_eq!(counted("dog", 1), "one dog");
        assert_eq!(counted("dog", 2), "two dogs");
        assert_eq!(counted("peach", 3), "three peaches");
        assert_eq!(counted("butterfly", 10), "ten butterflies");
        assert_eq!(counted("sheep", 4), "four sheep");
        assert_eq!(counted("teddy bear", 5), "five teddy bears");
    }

    #[test]
    fn number_words_roundtrip() {
        for n in 1..=10 {
            assert_eq!(parse_number_word(number_word(n).unwrap()), Some(n));
        }
        assert_eq!(number_word(0), None);
        assert_eq!(number_word(11), None);
    }

    #[test]
    fn singular_forms() {
        for (plural, singular) in [
            ("dogs", "dog"),
            ("boxes", "box"),
            ("cherries", "cherry"),
            ("buses", "bus"),
            ("bus", "bus"),
            ("glass", "glass"),
            ("glasses", "glass"),
            ("people", "person"),
            ("knives", "knife"),
            ("sheep", "sheep"),
            ("cow", "cow"),
            ("hot dogs", "hot dog"),
        ] {
            assert_eq!(singularize(plural), singular, "{plural}");
        }
    }

    #[test]
    fn coco_labels_roundtrip() {
        for label in [
            "cat", "dog", "apple", "banana", "cow", "person", "bicycle", "car", "bus", "horse",
            "sheep", "bird", "bottle", "cup", "fork", "knife", "spoon", "bowl", "sandwich",
            "orange", "broccoli", "carrot", "pizza", "donut", "cake", "chair", "couch", "bed",
            "toilet", "laptop", "mouse", "remote", "keyboard", "book", "clock", "vase",
            "scissors", "teddy bear", "toothbrush", "giraffe", "zebra", "elephant", "bear",
            "umbrella", "handbag", "tie", "suitcase", "frisbee", "kite", "boat", "truck",
        ] {
            assert_eq!(singularize(&pluralize(label)), label, "{label}");
        }
    }
}
