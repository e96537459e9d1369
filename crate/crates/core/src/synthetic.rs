//! Seeded generators for small datasets and corpora in the on-disk example format.
//!
//! Two example families are provided:
//!
//! * header match: gold columns are the columns whose header appears in the question and
//!   gold rows are the first three data rows;
//! * entity lookup: the question names an entity in the first column and asks for one
//!   attribute, so the gold cells are the entity cell and the attribute cell of its row.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::retrieval::Document;
use crate::table::{CellCoord, Dataset, ExampleMetadata, QaExample, Split, Table};

pub const HEADERS: &[&str] = &[
    "year", "team", "points", "rank", "venue", "score", "driver", "country", "wins", "goals", "coach", "city",
    "season", "title", "album", "label", "position", "club", "result", "opponent",
];

const FIRST_NAMES: &[&str] = &[
    "ari", "bex", "cor", "dan", "eli", "fen", "gus", "hal", "ivo", "jor", "kai", "lev", "mor", "nat", "oli", "pax",
];

const LAST_NAMES: &[&str] = &[
    "stone", "field", "ridge", "brook", "wood", "marsh", "vale", "hart", "ford", "lund",
];

const PLACES: &[&str] = &[
    "oslo", "lima", "perth", "quito", "dakar", "hanoi", "tunis", "porto", "cork", "graz", "bern", "riga",
];

const WORDS: &[&str] = &[
    "amber", "beacon", "cedar", "delta", "ember", "falcon", "garnet", "harbor", "indigo", "juniper", "kestrel",
    "lumen", "meadow", "nimbus", "onyx", "prism", "quartz", "raven", "sable", "tundra",
];

const NUMERIC: &[&str] = &["year", "points", "rank", "score", "wins", "goals", "season", "position"];

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn random_name<R: Rng>(rng: &mut R) -> String {
    format!(
        "{} {}",
        capitalize(FIRST_NAMES.choose(rng).expect("non-empty")),
        capitalize(LAST_NAMES.choose(rng).expect("non-empty"))
    )
}

fn distinct_names<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    let mut all: Vec<String> = FIRST_NAMES
        .iter()
        .flat_map(|f| LAST_NAMES.iter().map(move |l| format!("{} {}", capitalize(f), capitalize(l))))
        .collect();
    all.shuffle(rng);
    all.truncate(n);
    all
}

fn cell_value<R: Rng>(rng: &mut R, header: &str) -> String {
    match header {
        "year" | "season" => rng.random_range(1950..2021).to_string(),
        "driver" | "coach" => random_name(rng),
        "country" | "city" | "venue" => capitalize(PLACES.choose(rng).expect("non-empty")),
        h if NUMERIC.contains(&h) => rng.random_range(1..100).to_string(),
        _ => capitalize(WORDS.choose(rng).expect("non-empty")),
    }
}

fn pick_headers<R: Rng>(rng: &mut R, pool: &[&'static str], n: usize) -> Vec<&'static str> {
    let mut headers: Vec<&'static str> = pool.to_vec();
    headers.shuffle(rng);
    headers.truncate(n);
    headers
}

fn metadata<R: Rng>(rng: &mut R) -> ExampleMetadata {
    ExampleMetadata {
        page_title: Some(format!("{} {}", rng.random_range(1950..2021), capitalize(WORDS.choose(rng).expect("non-empty")))),
        section_title: Some("Results".to_string()),
    }
}

fn header_match_example<R: Rng>(rng: &mut R, id: String) -> QaExample {
    let n_cols = rng.random_range(4..=6);
    let n_data = rng.random_range(4..=8);
    let headers = pick_headers(rng, HEADERS, n_cols);
    let mut rows = vec![headers.iter().map(|h| capitalize(h)).collect::<Vec<_>>()];
    for _ in 0..n_data {
        rows.push(headers.iter().map(|h| cell_value(rng, h)).collect());
    }
    let n_rel = rng.random_range(1..=2);
    let mut rel: Vec<usize> = rand::seq::index::sample(rng, n_cols, n_rel).into_vec();
    rel.sort_unstable();
    let question = match rel.as_slice() {
        [a] => format!("What {} is listed in the leading rows?", headers[*a]),
        [a, b] => format!("What {} and {} are listed in the leading rows?", headers[*a], headers[*b]),
        _ => unreachable!("one or two relevant columns"),
    };
    let gold: Vec<CellCoord> = (1..=3)
        .flat_map(|r| rel.iter().map(move |&c| CellCoord::new(r, c)))
        .collect();
    let answer = rel
        .iter()
        .map(|&c| {
            format!(
                "The {} values are {}, {} and {}.",
                headers[c], rows[1][c], rows[2][c], rows[3][c]
            )
        })
        .collect::<Vec<_>>()
        .join(" ");
    QaExample {
        id,
        question,
        table: Table::from_rows(rows).expect("non-empty table"),
        gold_cells: gold,
        answer,
        metadata: metadata(rng),
    }
}

/// Examples whose gold columns are named in the question and whose gold rows are rows 1 to 3.
pub fn header_match_dataset(n: usize, split: Split, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| header_match_example(&mut rng, format!("hm-{}-{i:05}", split.as_str())))
        .collect();
    Dataset { split, examples }
}

fn entity_example<R: Rng>(rng: &mut R, id: String) -> QaExample {
    let n_attr = rng.random_range(3..=5);
    let n_data = rng.random_range(3..=9);
    let mut headers = vec!["name"];
    headers.extend(pick_headers(rng, HEADERS, n_attr));
    let names = distinct_names(rng, n_data);
    let mut rows = vec![headers.iter().map(|h| capitalize(h)).collect::<Vec<_>>()];
    for name in &names {
        let mut row = vec![name.clone()];
        row.extend(headers[1..].iter().map(|h| cell_value(rng, h)));
        rows.push(row);
    }
    let col = rng.random_range(1..headers.len());
    let header = headers[col];
    let (question, gold, answer) = if n_data >= 2 && rng.random_bool(0.3) {
        let picked = rand::seq::index::sample(rng, n_data, 2).into_vec();
        let (r1, r2) = (picked[0].min(picked[1]) + 1, picked[0].max(picked[1]) + 1);
        let question = format!("How did the {header} of {} compare with {}?", rows[r1][0], rows[r2][0]);
        let gold = vec![
            CellCoord::new(r1, 0),
            CellCoord::new(r1, col),
            CellCoord::new(r2, 0),
            CellCoord::new(r2, col),
        ];
        let answer = format!(
            "{} had a {header} of {} while {} had {}.",
            rows[r1][0], rows[r1][col], rows[r2][0], rows[r2][col]
        );
        (question, gold, answer)
    } else {
        let r = rng.random_range(1..=n_data);
        let question = match rng.random_range(0..3) {
            0 => format!("What was the {header} of {}?", rows[r][0]),
            1 => format!("Which {header} did {} have?", rows[r][0]),
            _ => format!("Tell me the {header} for {}.", rows[r][0]),
        };
        let gold = vec![CellCoord::new(r, 0), CellCoord::new(r, col)];
        let answer = format!("{} had a {header} of {}.", rows[r][0], rows[r][col]);
        (question, gold, answer)
    };
    QaExample {
        id,
        question,
        table: Table::from_rows(rows).expect("non-empty table"),
        gold_cells: gold,
        answer,
        metadata: metadata(rng),
    }
}

/// Entity lookup examples: the question names a row entity and an attribute column.
pub fn entity_dataset(n: usize, split: Split, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| entity_example(&mut rng, format!("ent-{}-{i:05}", split.as_str())))
        .collect();
    Dataset { split, examples }
}

/// Short biographical passages over the same names, places and words as the datasets.
pub fn synthetic_corpus(n_docs: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs)
        .map(|i| {
            let name = random_name(&mut rng);
            let place = capitalize(PLACES.choose(&mut rng).expect("non-empty"));
            let club = capitalize(WORDS.choose(&mut rng).expect("non-empty"));
            let year = rng.random_range(1950..2021);
            let header = HEADERS.choose(&mut rng).expect("non-empty");
            let text = match rng.random_range(0..3) {
                0 => format!(
                    "{name} joined {club} in {place} in {year}. The {header} record of that season is still cited."
                ),
                1 => format!(
                    "{place} hosted {club} for the {year} season! {name} was named best {header} of the year."
                ),
                _ => format!("In {year} {name} moved to {place}. Local reports focused on the {header} and the {club} club."),
            };
            Document {
                id: format!("doc{i:05}"),
                text,
                title: Some(name),
            }
        })
        .collect()
}
