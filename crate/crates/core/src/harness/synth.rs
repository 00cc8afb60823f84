use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Days, NaiveDate};
use image::{Rgba, RgbaImage};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

use super::dataset::DatasetManifest;
use super::HarnessError;
use crate::gateway::ScriptedStub;
use crate::imaging::encode_png;
use crate::model::{
    FullWebsiteContent, ImageAsset, ImageData, ImageKind, PipelineConfig, QueryRecord, Stage, Subfield,
    SummarizationWebsite, WebsiteAnnotation, WebsiteLabel, INVALID_QUESTION,
};
use crate::webio::{
    FetchedPage, FixtureMode, FixtureStore, PageFetcher, RenderMode, RenderRequest, ScreenshotRenderer, SearchHit,
    SearchProvider, WebClient, WebError,
};

struct Topic {
    subfield: Subfield,
    question: &'static str,
    requery: &'static str,
    answer: &'static str,
    fact: &'static str,
    with_image: bool,
}

const TOPICS: [Topic; 12] = [
    Topic {
        subfield: Subfield::TraditionalSports,
        question: "Which team won the 2024 Harbor Cup final?",
        requery: "2024 Harbor Cup final winner",
        answer: "Northport Rovers",
        fact: "The Northport Rovers won the 2024 Harbor Cup final after extra time.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::ESports,
        question: "Who was named MVP of the Summer Arena Invitational 2024?",
        requery: "Summer Arena Invitational 2024 MVP",
        answer: "Kaito Mori",
        fact: "Kaito Mori was named MVP of the Summer Arena Invitational 2024.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::Entertainment,
        question: "On what date did the film Silver Tide premiere?",
        requery: "Silver Tide film premiere date",
        answer: "2024-07-12",
        fact: "Silver Tide premiered in cinemas on 2024-07-12.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::GeneralNews,
        question: "How many bridges reopened in Lakeview after the June floods?",
        requery: "Lakeview bridges reopened after June floods",
        answer: "three",
        fact: "Officials said three bridges reopened in Lakeview after the June floods.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::Technology,
        question: "What battery capacity does the Nimbus X2 phone have?",
        requery: "Nimbus X2 phone battery capacity",
        answer: "5200 mAh",
        fact: "The Nimbus X2 ships with a 5200 mAh battery.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::FalsePremise,
        question: "Why was the Lunaris 5 moon landing cancelled in May?",
        requery: "Lunaris 5 moon landing cancelled",
        answer: INVALID_QUESTION,
        fact: "The Lunaris 5 mission is still scheduled and was never cancelled.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::Arts,
        question: "Which museum holds the painting Blue Orchard?",
        requery: "Blue Orchard painting museum",
        answer: "Halden Gallery",
        fact: "Blue Orchard hangs in the Halden Gallery.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::Architecture,
        question: "How tall is the Veridian Tower?",
        requery: "Veridian Tower height",
        answer: "412 meters",
        fact: "The Veridian Tower rises 412 meters above street level.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::Astronomy,
        question: "Which constellation contains the star Keth Prime?",
        requery: "Keth Prime star constellation",
        answer: "Lyra",
        fact: "Keth Prime is a bright star in the constellation Lyra.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::Anime,
        question: "Which studio produced the anime shown in the image?",
        requery: "Skyward Lanterns anime studio",
        answer: "Studio Hoshi",
        fact: "Skyward Lanterns was produced by Studio Hoshi.",
        with_image: true,
    },
    Topic {
        subfield: Subfield::Auto,
        question: "What is the top speed of the Arden GT electric car?",
        requery: "Arden GT electric car top speed",
        answer: "250 km/h",
        fact: "The Arden GT electric car reaches a top speed of 250 km/h.",
        with_image: false,
    },
    Topic {
        subfield: Subfield::Fashion,
        question: "Which designer created the dress in the image?",
        requery: "emerald pleated gown designer",
        answer: "Maren Liu",
        fact: "The emerald pleated gown was designed by Maren Liu.",
        with_image: true,
    },
];

const FILLER: &str = "Local reporters gathered background material from several sources. \
    Readers asked follow-up questions about schedules, venues and ticket prices. \
    Editors noted that further updates would follow as details were confirmed.";

fn seed_of(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Page-like picture: a tinted header, then bands of glyph-like blocks
/// separated by blank gaps. Low entropy keeps the PNGs small.
pub fn synthetic_page(width: u32, height: u32, seed: u64) -> RgbaImage {
    let mut rng = StdRng::seed_from_u64(seed);
    let tint = Rgba([rng.gen_range(40..200), rng.gen_range(40..200), rng.gen_range(40..200), 255]);
    let mut img = RgbaImage::from_pixel(width, height, Rgba([255, 255, 255, 255]));
    let header = (height / 12).clamp(1, 64);
    for y in 0..header {
        for x in 0..width {
            img.put_pixel(x, y, tint);
        }
    }
    let ink = Rgba([40, 40, 40, 255]);
    let mut y = header + 24;
    while y + 16 < height {
        let lines = rng.gen_range(3..7);
        for _ in 0..lines {
            if y + 16 >= height {
                break;
            }
            let mut x = 16;
            while x + 12 < width.saturating_sub(16) {
                let w = rng.gen_range(4..12);
                for yy in y..y + 12 {
                    for xx in x..x + w {
                        img.put_pixel(xx, yy, ink);
                    }
                }
                x += w + rng.gen_range(2..6);
            }
            y += 20;
        }
        y += rng.gen_range(40..120);
    }
    img
}

struct SynthPage {
    html: String,
    height: u32,
}

/// In-memory web serving the generated queries; used to record fixtures.
#[derive(Default)]
pub struct SyntheticWeb {
    pages: HashMap<String, SynthPage>,
    searches: HashMap<String, Vec<SearchHit>>,
}

fn norm(query: &str) -> String {
    query.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl SearchProvider for SyntheticWeb {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, WebError> {
        Ok(self.searches.get(&norm(query)).map(|h| h.iter().take(k).cloned().collect()).unwrap_or_default())
    }
}

impl PageFetcher for SyntheticWeb {
    fn fetch(&self, url: &str) -> Result<FetchedPage, WebError> {
        let page = self.pages.get(url).ok_or(WebError::Http { url: url.into(), status: 404, attempts: 1 })?;
        Ok(FetchedPage {
            requested_url: url.into(),
            final_url: url.into(),
            status: 200,
            redirects: Vec::new(),
            truncated: false,
            body: page.html.clone().into_bytes(),
        })
    }
}

impl ScreenshotRenderer for SyntheticWeb {
    fn render(&self, request: &RenderRequest) -> Result<Vec<u8>, WebError> {
        let page = self.pages.get(&request.url).ok_or(WebError::Http {
            url: request.url.clone(),
            status: 404,
            attempts: 1,
        })?;
        let height = if request.full_page { page.height } else { request.height.unwrap_or(page.height) };
        let seed = seed_of(&format!("{}|{}", request.url, request.full_page));
        Ok(encode_png(&synthetic_page(request.width, height, seed))?)
    }
}

/// Locations of a generated fixture set.
#[derive(Debug, Clone)]
pub struct SyntheticFixtures {
    pub root: PathBuf,
    pub dataset_dir: PathBuf,
    pub fixture_dir: PathBuf,
    pub stub_path: PathBuf,
    pub records: Vec<QueryRecord>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;
    }
    std::fs::write(path, bytes).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn image_file(dataset_dir: &Path, id: &str, kind: ImageKind, img: &RgbaImage) -> Result<ImageAsset, HarnessError> {
    let rel = PathBuf::from("images").join(format!("{id}.png"));
    write_file(&dataset_dir.join(&rel), &encode_png(img)?)?;
    Ok(ImageAsset {
        id: id.into(),
        kind,
        width: img.width(),
        height: img.height(),
        data: ImageData::Path { path: rel },
    })
}

fn rotate<T: Clone>(items: &[T], by: usize) -> Vec<T> {
    let n = items.len();
    (0..n).map(|i| items[(i + by) % n].clone()).collect()
}

const NEWS_START: NaiveDate = NaiveDate::from_ymd_opt(2024, 5, 1).expect("valid date");
const NEWS_SPAN_DAYS: u64 = 122;

/// Writes a self-contained benchmark under `root`: `dataset/` (records,
/// images, manifest), `fixtures/` (replayable web responses) and
/// `stub.json` (scripted model outputs). News queries are dated from
/// 2024-05-01 to 2024-08-31.
pub fn generate_fixtures(
    root: &Path,
    count: usize,
    config: &PipelineConfig,
) -> Result<SyntheticFixtures, HarnessError> {
    let dataset_dir = root.join("dataset");
    let fixture_dir = root.join("fixtures");
    let stub_path = root.join("stub.json");
    let k = config.k_websites;

    let dated: Vec<usize> = (0..count)
        .filter(|i| {
            let t = &TOPICS[i % TOPICS.len()];
            t.subfield.area() == crate::model::Area::News && t.subfield != Subfield::FalsePremise
        })
        .collect();
    let date_of = |i: usize| {
        let j = dated.iter().position(|&d| d == i)?;
        let offset = if dated.len() > 1 { NEWS_SPAN_DAYS * j as u64 / (dated.len() as u64 - 1) } else { 0 };
        NEWS_START.checked_add_days(Days::new(offset))
    };

    let mut web = SyntheticWeb::default();
    let mut stub = ScriptedStub::new();
    let mut records = Vec::with_capacity(count);
    let mut manifest = DatasetManifest { name: "synthetic".into(), records: Vec::new() };
    let mut queries_to_record: Vec<String> = Vec::new();

    for i in 0..count {
        let topic = &TOPICS[i % TOPICS.len()];
        let round = i / TOPICS.len();
        let suffix = if round == 0 { String::new() } else { format!(" round {}", round + 1) };
        let id = format!("q{i:03}");
        let question = format!("{}{suffix}", topic.question);
        let gt_requery = format!("{}{suffix}", topic.requery);
        let valid = i % k;
        let unsure = (i + 3) % k;

        let mut websites = Vec::with_capacity(k);
        let mut hits = Vec::with_capacity(k);
        for j in 0..k {
            let url = format!("https://{id}-site{}.example/article", j + 1);
            let label = match j {
                _ if j == valid => WebsiteLabel::Valid,
                _ if j == unsure => WebsiteLabel::Unsure,
                _ => WebsiteLabel::Invalid,
            };
            let title = format!("{} | source {}", gt_requery, j + 1);
            let snippet = match label {
                WebsiteLabel::Valid => topic.fact.to_string(),
                WebsiteLabel::Unsure => format!("Coverage related to {}.", topic.requery),
                WebsiteLabel::Invalid => "Unrelated listings and announcements.".to_string(),
            };
            let body = match label {
                WebsiteLabel::Valid => format!("<p>{FILLER}</p><p>{}</p><p>{FILLER}</p>", topic.fact),
                _ => format!("<p>{FILLER}</p><p>{snippet}</p>"),
            };
            let html = format!(
                "<html><head><title>{title}</title><script>track()</script></head><body><nav>Home | News</nav>\
                 <h1>{title}</h1>{body}</body></html>"
            );
            let height = 700 + (seed_of(&url) % 900) as u32;
            web.pages.insert(url.clone(), SynthPage { html, height });

            let top =
                synthetic_page(config.top_section_width, config.top_section_height, seed_of(&format!("{url}|false")));
            let top_asset =
                image_file(&dataset_dir, &format!("{id}-site{}", j + 1), ImageKind::TopSectionScreenshot, &top)?;
            websites.push(WebsiteAnnotation {
                url: url.clone(),
                title: title.clone(),
                snippet: snippet.clone(),
                top_screenshot: top_asset,
                label,
            });
            hits.push(SearchHit { url, title, snippet });
        }

        let segments = (0..2)
            .map(|s| {
                let img =
                    synthetic_page(config.fullpage_width, config.segment_height, seed_of(&format!("{id}-seg{s}")));
                image_file(&dataset_dir, &format!("{id}-summary-seg{s}"), ImageKind::FullpageSegment, &img)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let summarization_website = SummarizationWebsite {
            website_index: valid,
            content: FullWebsiteContent {
                url: websites[valid].url.clone(),
                title: websites[valid].title.clone(),
                snippet: websites[valid].snippet.clone(),
                retrieved_text: format!("{FILLER}\n\n{}", topic.fact),
                fullpage_segments: segments,
            },
        };

        let (query_image, image_search_screenshot) = if topic.with_image {
            let q = synthetic_page(320, 240, seed_of(&format!("{id}-query")));
            let lens = synthetic_page(640, 480, seed_of(&format!("{id}-lens")));
            (
                Some(image_file(&dataset_dir, &format!("{id}-query"), ImageKind::QueryImage, &q)?),
                Some(image_file(&dataset_dir, &format!("{id}-lens"), ImageKind::ImageSearchScreenshot, &lens)?),
            )
        } else {
            (None, None)
        };

        let record = QueryRecord {
            id: id.clone(),
            area: topic.subfield.area(),
            subfield: topic.subfield,
            question: question.clone(),
            query_image,
            image_search_screenshot,
            timestamp: date_of(i),
            gt_requery: gt_requery.clone(),
            gt_answer: topic.answer.to_string(),
            websites,
            summarization_website: Some(summarization_website),
        };

        let requeries = vec![
            format!("{} latest", topic.requery),
            gt_requery.clone(),
            format!("news about {}", topic.requery),
            question.clone(),
            format!("{gt_requery} details"),
        ];
        let reranks = vec![
            format!("<Website {}>", valid + 1),
            format!("I would pick <Website {}> since it looks relevant.", unsure + 1),
            "Website two".to_string(),
            format!("<website {}>", (valid + 1) % k + 1),
            format!("< Website {} >", valid + 1),
        ];
        let answers = vec![topic.answer.to_string(), format!("probably {}", topic.answer), "no idea".to_string()];
        stub.insert(&id, Stage::Requery, rotate(&requeries, i % 2));
        stub.insert(&id, Stage::Rerank, rotate(&reranks, i % 3));
        stub.insert(&id, Stage::Summarize, rotate(&answers, i % 3));

        for q in requeries.iter().chain([&question, &gt_requery]) {
            web.searches.insert(norm(q), hits.clone());
            queries_to_record.push(q.clone());
        }
        let file = PathBuf::from(format!("{id}.json"));
        write_file(&dataset_dir.join(&file), record.to_json().as_bytes())?;
        manifest.records.push(file);
        records.push(record);
    }
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    write_file(&dataset_dir.join("manifest.json"), &manifest_bytes)?;
    let mut stub_bytes = serde_json::to_vec_pretty(&stub).expect("stub serializes");
    stub_bytes.push(b'\n');
    write_file(&stub_path, &stub_bytes)?;

    let web = Arc::new(web);
    let recorder = WebClient::new(FixtureMode::Record)
        .with_store(FixtureStore::new(&fixture_dir))
        .with_search(web.clone())
        .with_fetcher(web.clone())
        .with_renderer(web.clone());
    for q in &queries_to_record {
        recorder.search_hits(q, k)?;
    }
    for record in &records {
        for site in &record.websites {
            recorder.render_screenshot(&site.url, RenderMode::TopSection, config)?;
            recorder.render_screenshot(&site.url, RenderMode::FullPage, config)?;
            recorder.fetch_page(&site.url)?;
        }
    }

    for record in &mut records {
        for image in record.images_mut() {
            image.resolve_against(&dataset_dir);
        }
    }
    Ok(SyntheticFixtures { root: root.to_path_buf(), dataset_dir, fixture_dir, stub_path, records })
}
