//! Built-in eight-domain catalog used by the standard benchmark.
//!
//! `books` is the low-traffic target domain. Several carrier phrases
//! ("play …", "tell me about …", "buy …") are shared with the large
//! domains and some titles exist both as books and as films, so part of
//! the target traffic is genuinely confusable.

use std::collections::BTreeMap;

use super::{CorpusConfig, DomainSpec, IntentSpec, CORPUS_SCHEMA_VERSION};

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn intent(name: &str, templates: &[&str], shared: &[&str]) -> IntentSpec {
    IntentSpec {
        name: name.to_string(),
        templates: words(templates),
        shared_templates: words(shared),
    }
}

fn slots() -> BTreeMap<String, Vec<String>> {
    let mut s = BTreeMap::new();
    s.insert(
        "song".into(),
        words(&[
            "hello", "bad guy", "yellow", "thriller", "imagine", "hey jude", "wonderwall",
            "let it be", "halo", "shallow", "blinding lights", "levitating", "perfect",
            "someone like you", "rolling in the deep", "viva la vida", "fix you", "clocks",
            "bohemian rhapsody", "lose yourself", "umbrella", "formation", "shake it off",
            "blank space", "hotline bling", "one dance", "purple rain", "africa",
            "take on me", "dancing queen", "believer", "radioactive", "sunflower",
            "as it was", "easy on me", "anti hero", "flowers", "vampire", "drivers license",
            "good as hell",
        ]),
    );
    s.insert(
        "artist".into(),
        words(&[
            "adele", "coldplay", "the beatles", "taylor swift", "drake", "queen", "eminem",
            "rihanna", "beyonce", "u2", "prince", "toto", "abba", "imagine dragons",
            "post malone", "harry styles", "miley cyrus", "olivia rodrigo", "lizzo",
            "billie eilish", "the weeknd", "dua lipa", "ed sheeran", "bruno mars",
            "kendrick lamar", "shakira", "metallica", "nirvana", "radiohead", "oasis",
        ]),
    );
    s.insert(
        "genre".into(),
        words(&[
            "jazz", "rock", "classical music", "hip hop", "country", "workout music",
            "chill music", "pop hits", "lofi beats", "blues", "reggae", "disco",
            "party music", "the top forty", "indie rock", "sleep sounds",
        ]),
    );
    s.insert(
        "city".into(),
        words(&[
            "seattle", "boston", "paris", "london", "tokyo", "chicago", "denver", "miami",
            "austin", "berlin", "madrid", "rome", "sydney", "toronto", "dublin", "portland",
            "atlanta", "phoenix", "oslo", "vienna",
        ]),
    );
    s.insert(
        "day".into(),
        words(&[
            "today", "tomorrow", "tonight", "this weekend", "monday", "friday",
            "this afternoon", "next week", "saturday", "sunday morning",
        ]),
    );
    s.insert(
        "movie".into(),
        words(&[
            "the matrix", "frozen", "inception", "titanic", "jaws", "avatar", "the hobbit",
            "dune", "the shining", "little women", "it", "the road", "wonder", "dracula",
            "the godfather", "toy story", "star wars", "jurassic park", "the lion king",
            "finding nemo", "top gun", "casablanca", "rocky", "alien", "coco", "up",
            "moana", "shrek", "gladiator", "interstellar", "the great gatsby", "emma",
        ]),
    );
    s.insert(
        "show".into(),
        words(&[
            "friends", "the office", "seinfeld", "the crown", "stranger things",
            "breaking bad", "succession", "ted lasso", "the bear", "severance",
            "the simpsons", "bluey", "game of thrones", "the mandalorian", "wednesday",
        ]),
    );
    s.insert(
        "product".into(),
        words(&[
            "paper towels", "batteries", "coffee beans", "headphones", "dog food",
            "toothpaste", "laundry detergent", "a phone charger", "printer ink",
            "running shoes", "trash bags", "olive oil", "a water bottle", "light bulbs",
            "dish soap", "cat litter", "vitamins", "a yoga mat", "sunscreen", "shampoo",
            "a desk lamp", "an hdmi cable",
        ]),
    );
    s.insert(
        "device".into(),
        words(&[
            "lights", "thermostat", "fan", "tv", "lamp", "heater", "air conditioner",
            "front door lock", "garage door", "plug", "speaker", "blinds",
        ]),
    );
    s.insert(
        "room".into(),
        words(&[
            "kitchen", "bedroom", "living room", "office", "garage", "hallway", "basement",
            "bathroom", "patio",
        ]),
    );
    s.insert(
        "level".into(),
        words(&["fifty percent", "seventy degrees", "low", "high", "ten percent", "sixty eight degrees"]),
    );
    s.insert(
        "topic".into(),
        words(&[
            "sports", "politics", "technology", "business", "the election", "science",
            "health", "the economy", "world news", "the stock market", "space", "climate",
            "football", "baseball", "local news",
        ]),
    );
    s.insert(
        "source".into(),
        words(&["bbc", "npr", "cnn", "reuters", "the times", "fox news", "espn", "the guardian"]),
    );
    s.insert(
        "duration".into(),
        words(&[
            "five minutes", "ten minutes", "an hour", "thirty seconds", "twenty minutes",
            "two hours", "fifteen minutes", "forty five minutes", "ninety seconds", "three minutes",
        ]),
    );
    s.insert(
        "time".into(),
        words(&[
            "seven am", "noon", "six thirty", "midnight", "eight pm", "nine fifteen",
            "five am", "ten thirty", "quarter past four", "half past six",
        ]),
    );
    s.insert(
        "book".into(),
        words(&[
            "the hobbit", "dune", "the shining", "pride and prejudice", "war and peace",
            "moby dick", "the great gatsby", "little women", "the road", "it", "educated",
            "becoming", "atomic habits", "the alchemist", "emma", "dracula", "frankenstein",
            "beloved", "the giver", "wonder", "hamlet", "ulysses", "the outsiders",
            "rebecca", "persuasion", "jane eyre", "middlemarch", "the odyssey",
            "brave new world", "animal farm", "catch twenty two", "the hunger games",
            "gone girl", "the martian", "sapiens", "circe", "normal people",
            "the midnight library", "where the crawdads sing", "lessons in chemistry",
            "the goldfinch", "the kite runner", "life of pi", "the secret history",
            "the bell jar", "invisible man", "walden", "the iliad", "don quixote",
            "les miserables",
        ]),
    );
    s.insert(
        "author".into(),
        words(&[
            "stephen king", "jane austen", "tolkien", "toni morrison", "frank herbert",
            "agatha christie", "michelle obama", "james clear", "paulo coelho",
            "leo tolstoy", "herman melville", "mary shelley", "bram stoker", "george orwell",
            "margaret atwood", "sally rooney", "andy weir", "suzanne collins",
            "yuval harari", "madeline miller", "donna tartt", "charlotte bronte",
            "george eliot", "homer", "khaled hosseini", "sylvia plath", "ralph ellison",
            "cervantes", "victor hugo", "louisa may alcott",
        ]),
    );
    s.insert(
        "chapter".into(),
        words(&["one", "two", "three", "four", "five", "six", "seven", "ten", "twelve", "twenty"]),
    );
    s
}

/// The standard eight-domain benchmark catalog. Domain 7 (`books`) is the
/// target and receives 0.4% of traffic.
pub fn standard_catalog() -> CorpusConfig {
    let domains = vec![
        DomainSpec {
            domain_id: 0,
            name: "music".into(),
            traffic_share: 0.30,
            overlap_coefficient: 0.35,
            intents: vec![
                intent(
                    "PlayMusic",
                    &[
                        "play {song} by {artist}",
                        "play the song {song}",
                        "play some {genre}",
                        "shuffle songs by {artist}",
                        "i want to hear {song}",
                        "play {artist} radio",
                    ],
                    &["play {song}", "put on {artist}", "start {genre}", "play {artist}"],
                ),
                intent(
                    "PauseMusic",
                    &["pause the music", "stop the song", "skip this song", "next track please"],
                    &["stop", "pause"],
                ),
                intent(
                    "MusicInfo",
                    &["who sings {song}", "what song is this", "when did {artist} release {song}"],
                    &["tell me about {artist}", "what is new by {artist}"],
                ),
            ],
        },
        DomainSpec {
            domain_id: 1,
            name: "weather".into(),
            traffic_share: 0.15,
            overlap_coefficient: 0.2,
            intents: vec![
                intent(
                    "GetWeather",
                    &[
                        "what is the weather in {city}",
                        "weather forecast for {day}",
                        "will it rain in {city} {day}",
                        "how hot will it be {day}",
                        "is it going to snow {day}",
                    ],
                    &["what is it like in {city}", "tell me about {day}"],
                ),
                intent(
                    "GetTemperature",
                    &["what is the temperature in {city}", "how cold is it outside", "temperature {day}"],
                    &["what is {city} like {day}"],
                ),
            ],
        },
        DomainSpec {
            domain_id: 2,
            name: "video".into(),
            traffic_share: 0.13,
            overlap_coefficient: 0.4,
            intents: vec![
                intent(
                    "PlayVideo",
                    &[
                        "watch {movie}",
                        "stream the movie {movie}",
                        "play the next episode of {show}",
                        "watch {show} season two",
                        "show me the trailer for {movie}",
                    ],
                    &["play {movie}", "put on {movie}", "start {show}", "play {show}"],
                ),
                intent(
                    "VideoInfo",
                    &["who stars in {movie}", "how long is the movie {movie}", "is {show} on tonight"],
                    &["tell me about {movie}", "what is {movie} about"],
                ),
            ],
        },
        DomainSpec {
            domain_id: 3,
            name: "shopping".into(),
            traffic_share: 0.12,
            overlap_coefficient: 0.3,
            intents: vec![
                intent(
                    "BuyItem",
                    &[
                        "add {product} to my cart",
                        "reorder {product}",
                        "put {product} on my shopping list",
                        "find deals on {product}",
                    ],
                    &["buy {product}", "order {product}", "get me {product}"],
                ),
                intent(
                    "TrackOrder",
                    &["where is my package", "track my order of {product}", "when will {product} arrive"],
                    &["what is the status of {product}"],
                ),
            ],
        },
        DomainSpec {
            domain_id: 4,
            name: "smart_home".into(),
            traffic_share: 0.12,
            overlap_coefficient: 0.15,
            intents: vec![
                intent(
                    "TurnOn",
                    &[
                        "turn on the {room} {device}",
                        "switch on the {device}",
                        "turn on the {device} in the {room}",
                    ],
                    &["start the {device}", "open the {device}"],
                ),
                intent(
                    "TurnOff",
                    &["turn off the {room} {device}", "switch off the {device}", "shut off the {device}"],
                    &["stop the {device}"],
                ),
                intent(
                    "SetLevel",
                    &["set the {device} to {level}", "dim the {room} lights to {level}"],
                    &[],
                ),
            ],
        },
        DomainSpec {
            domain_id: 5,
            name: "news".into(),
            traffic_share: 0.08,
            overlap_coefficient: 0.35,
            intents: vec![
                intent(
                    "GetNews",
                    &[
                        "what is the latest news on {topic}",
                        "give me the headlines from {source}",
                        "news about {topic} from {source}",
                        "play my flash briefing",
                    ],
                    &["tell me about {topic}", "what is new in {topic}", "play {source}"],
                ),
                intent(
                    "ReadArticle",
                    &["read the top story from {source}", "read me the headlines about {topic}"],
                    &["read {topic} news"],
                ),
            ],
        },
        DomainSpec {
            domain_id: 6,
            name: "timers".into(),
            traffic_share: 0.096,
            overlap_coefficient: 0.1,
            intents: vec![
                intent(
                    "SetTimer",
                    &["set a timer for {duration}", "start a {duration} timer", "timer for {duration}"],
                    &["start {duration}"],
                ),
                intent(
                    "SetAlarm",
                    &["wake me up at {time}", "set an alarm for {time}", "alarm at {time} {day}"],
                    &[],
                ),
                intent(
                    "CancelTimer",
                    &["cancel my timer", "stop the alarm", "how much time is left"],
                    &["stop"],
                ),
            ],
        },
        DomainSpec {
            domain_id: 7,
            name: "books".into(),
            traffic_share: 0.004,
            overlap_coefficient: 0.45,
            intents: vec![
                intent(
                    "ReadBook",
                    &[
                        "read {book}",
                        "read my book {book}",
                        "open my audiobook {book}",
                        "continue reading {book}",
                        "read chapter {chapter} of {book}",
                        "resume my audiobook",
                    ],
                    &["play {book}", "put on {book}", "start {book}"],
                ),
                intent(
                    "SearchBook",
                    &[
                        "find books by {author}",
                        "search for novels by {author}",
                        "what books did {author} write",
                    ],
                    &["show me {author}", "what is new by {author}", "play {author}"],
                ),
                intent(
                    "BuyBook",
                    &["buy the book {book}", "order the kindle edition of {book}", "get the paperback of {book}"],
                    &["buy {book}", "order {book}"],
                ),
                intent(
                    "BookInfo",
                    &["who wrote {book}", "how many chapters are in {book}", "when was {book} published"],
                    &["tell me about {book}", "what is {book} about"],
                ),
            ],
        },
    ];
    CorpusConfig {
        schema_version: CORPUS_SCHEMA_VERSION,
        target_domain: 7,
        zipf_exponent: 1.0,
        slots: slots(),
        domains,
    }
}
