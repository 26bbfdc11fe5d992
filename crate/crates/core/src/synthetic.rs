//! Seeded toy corpus: entities whose descriptions follow a handful of fixed
//! head-modifier patterns and whose modifiers appear verbatim in the infobox.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Entity, Statement};

/// Templates of the generated descriptions, one per family.
pub const FAMILY_TEMPLATES: [&str; 6] = [
    "$hed$ in $mod$ , $mod$",
    "$mod$ $hed$",
    "$mod$ $hed$ , $hed$",
    "$mod$ $mod$ $hed$",
    "$hed$ by $mod$",
    "$hed$ in $mod$",
];

const STREETS: &[&str] = &["street", "road", "avenue", "square", "bridge", "station", "boulevard", "tunnel"];
const CITIES: &[&str] = &["paris", "berlin", "rome", "madrid", "vienna", "lisbon", "prague", "warsaw", "dublin", "oslo"];
const COUNTRIES: &[&str] = &["france", "germany", "italy", "spain", "austria", "portugal", "czechia", "poland", "ireland", "norway"];
const NATIONALITIES: &[&str] = &["french", "german", "italian", "american", "british", "spanish", "dutch", "swedish", "polish", "japanese"];
const OCCUPATIONS: &[&str] = &["singer", "painter", "writer", "actor", "politician", "architect", "chemist", "composer", "poet", "engineer"];
const WORKS: &[&str] = &["film", "novel", "album", "documentary", "opera", "series"];
const YEARS: &[&str] = &["1954", "1967", "1972", "1988", "1993", "2001", "2008", "2014", "2017", "2020"];
const CREATIONS: &[&str] = &["album", "song", "painting", "sculpture", "single", "mural"];
const ARTISTS: &[&str] = &["monet", "bowie", "rodin", "vermeer", "dylan", "madonna", "picasso", "adele", "klimt", "bjork"];
const LANDFORMS: &[&str] = &["mountain", "lake", "hill", "glacier", "valley", "waterfall", "volcano", "island"];
const REGIONS: &[&str] = &["bavaria", "tuscany", "patagonia", "lapland", "provence", "andalusia", "tyrol", "cornwall", "bohemia", "silesia"];

const SYLLABLES: &[&str] = &["ka", "lo", "mi", "ren", "tor", "vel", "sa", "dun", "fi", "bra", "no", "zel", "qui", "mar", "ost"];
const SURNAMES: &[&str] = &["cazotte", "dumont", "keller", "moretti", "novak", "larsen", "okafor", "haddad", "ivanova", "tanaka"];

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).copied().expect("non-empty pool")
}

fn name<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=3);
    (0..n).map(|_| pick(rng, SYLLABLES)).collect()
}

fn filler<R: Rng>(rng: &mut R, label: &str) -> Statement {
    match rng.gen_range(0..6) {
        0 => Statement::new("P373", "commons category", label),
        1 => Statement::new("P1448", "official name", label),
        2 => Statement::new("P138", "named after", pick(rng, SURNAMES)),
        3 => Statement::new("P571", "inception", pick(rng, YEARS)),
        4 => Statement::new("P2044", "elevation above sea level", &rng.gen_range(10..4000).to_string()),
        _ => Statement::new("P646", "freebase id", &format!("m0{}", name(rng))),
    }
}

/// Description and the statements that carry its heads and modifiers.
fn core<R: Rng>(rng: &mut R, family: usize) -> (String, Vec<Statement>) {
    match family {
        0 => {
            let (h, city, country) = (pick(rng, STREETS), pick(rng, CITIES), pick(rng, COUNTRIES));
            (
                format!("{h} in {city} , {country}"),
                vec![
                    Statement::new("P31", "instance of", h),
                    Statement::new("P131", "located in the administrative territorial entity", city),
                    Statement::new("P17", "country", country),
                ],
            )
        }
        1 => {
            let (nat, occ) = (pick(rng, NATIONALITIES), pick(rng, OCCUPATIONS));
            (
                format!("{nat} {occ}"),
                vec![
                    Statement::new("P31", "instance of", "human"),
                    Statement::new("P27", "country of citizenship", nat),
                    Statement::new("P106", "occupation", occ),
                ],
            )
        }
        2 => {
            let nat = pick(rng, NATIONALITIES);
            let mut occs: Vec<&str> = OCCUPATIONS.choose_multiple(rng, 2).copied().collect();
            occs.shuffle(rng);
            (
                format!("{nat} {} , {}", occs[0], occs[1]),
                vec![
                    Statement::new("P31", "instance of", "human"),
                    Statement::new("P27", "country of citizenship", nat),
                    Statement::new("P106", "occupation", occs[0]),
                    Statement::new("P106", "occupation", occs[1]),
                ],
            )
        }
        3 => {
            let (year, nat, work) = (pick(rng, YEARS), pick(rng, NATIONALITIES), pick(rng, WORKS));
            (
                format!("{year} {nat} {work}"),
                vec![
                    Statement::new("P31", "instance of", work),
                    Statement::new("P577", "publication date", year),
                    Statement::new("P495", "country of origin", nat),
                ],
            )
        }
        4 => {
            let (work, artist) = (pick(rng, CREATIONS), pick(rng, ARTISTS));
            (
                format!("{work} by {artist}"),
                vec![Statement::new("P31", "instance of", work), Statement::new("P175", "performer", artist)],
            )
        }
        _ => {
            let (land, region) = (pick(rng, LANDFORMS), pick(rng, REGIONS));
            (
                format!("{land} in {region}"),
                vec![
                    Statement::new("P31", "instance of", land),
                    Statement::new("P131", "located in the administrative territorial entity", region),
                ],
            )
        }
    }
}

/// `count` entities cycling through the families, each with 5 to 8
/// statements. Gold templates are left unset.
pub fn generate(count: usize, seed: u64) -> Vec<Entity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let family = i % FAMILY_TEMPLATES.len();
            let label = format!("{} {}", name(&mut rng), name(&mut rng));
            let (description, mut statements) = core(&mut rng, family);
            let total = rng.gen_range(5..=8);
            while statements.len() < total {
                let f = filler(&mut rng, &label);
                statements.push(f);
            }
            statements.shuffle(&mut rng);
            Entity::new(&format!("S{i}"), &label, &description, statements)
        })
        .collect()
}

/// Family index of the `i`-th generated entity.
pub fn family_of(index: usize) -> usize {
    index % FAMILY_TEMPLATES.len()
}
