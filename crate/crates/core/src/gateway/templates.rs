//! The six stage prompts (text-only and image variants). `{website_count}`
//! stands for K; every other `{name}` is filled from the query or websites.

pub const REQUERY_TEXT: &str = "\
You are a helpful assistant. I am giving you a question, which cannot be solved without external knowledge.
Assume you have access to a text-only search engine (e.g., google). Please raise a query to the search engine to search for what is useful for you to answer the question correctly. Your query needs to consider the attribute of the query to search engine.
Here are 3 examples:
Question: Did Zheng Xiuwen wear a knee pad in the women's singles tennis final in 2024 Paris Olympics?
Query to the search engine: Images of Zheng Xiuwen in the women's singles tennis final in 2024 Paris Olympics

Question: When will Apple release iPhone16?
Query to the search engine: iPhone 16 release date

Question: Who will sing a French song at the Olympic Games closing ceremony?
Query to the search engine: Singers at the Olympic Games closing ceremony, French song.

Question: {question}.
Query to the search engine (do not involve any explanation):";

pub const REQUERY_IMAGE: &str = "\
You are a helpful assistant. I am giving you a question including an image, which cannot be solved without external knowledge.
Assume you have access to a search engine (e.g., google). Please raise a query to the search engine to search for what is useful for you to answer the question correctly. You need to consider the characteristics of asking questions to search engines when formulating your questions.
You are also provided with the search result of the image in the question. You should leverage the image search result to raise the text query.
Here are 3 examples:
Question: Did Zheng Xiuwen wear a knee pad in the women's singles tennis final in 2024 Paris Olympics?
Query to the search engine: Images of Zheng Xiuwen in the women's singles tennis final in 2024 Paris Olympics

Question: When will Apple release iPhone16?
Query to the search engine: iPhone 16 release date

Question: Who will sing a French song at the Olympic Games closing ceremony?
Query to the search engine: Singers at the Olympic Games closing ceremony, French song

Question: {query_image}{question}. The image search result is: {image_search_result}
Query to the search engine (do not involve any explanation):";

pub const RERANK_TEXT: &str = "\
You are a helpful assistant. I am giving you a question and {website_count} website information related to the question (including the screenshot, snippet and title). You should now read the screenshots, snippets and titles. Select 1 website that is the most helpful for you to answer the question. Once you select it, the detailed content of them will be provided to help you correctly answer the question. The question is {question}. The website informations is
{website_information}.
You should directly output 1 website's index that can help you most, and enclose the website in angle brackets. The output format should be: <Website Index >.
An example of the output is: <Website 1 >.
Your answer:";

pub const RERANK_IMAGE: &str = "\
You are a helpful assistant. I am giving you a question including an image. You are provided with the search result of the image in the question. And you are provided with {website_count} website information related to the question (including the screenshot, snippet, and title).
You should now read the screenshots, snippets and titles of these websites. Select 1 website that is the most helpful for you to answer the question. Once you select it, the detailed content of them will be provided to help you correctly answer the question. The question is {query_image}{question}.
The image search result is {image_search_result}.
The website information is {website_information}.
You should directly output 1 website's index that can help you most, and enclose the website in angle brackets. The output format should be: <Website Index >.
An example of the output is: <Website 1 >.
Your answer:";

pub const SUMMARIZE_TEXT: &str = "\
You are a helpful assistant. I am giving you a question and 1 website information related to the question.
Please follow these guidelines when formulating your answer:
1. If the question contains a false premise or assumption, answer \"invalid question\".
2. When answering questions about dates, use the yyyy-mm-dd format.
3. Answer the question with as few words as you can.

You should now read the information of the website and answer the question.
The website information is {website_information}.
The question is {question}.
Please directly output the answer without any explanation:";

pub const SUMMARIZE_IMAGE: &str = "\
You are a helpful assistant. I am giving you a question including an image. You are provided with the search result of the image in the question. And you are provided with 1 website information related to the question.
Please follow these guidelines when formulating your answer:
1. If the question contains a false premise or assumption, answer \"invalid question\".
2. When answering questions about dates, use the yyyy-mm-dd format.
3. Answer the question with as few words as you can.

You should now read the information of the website and answer the question.
The website information is {website_information}.
The image search result is {image_search_result}.
The question is {query_image}{question}.
Please directly output the answer without any explanation:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Question,
    QueryImage,
    ImageSearchResult,
    WebsiteInformation,
    WebsiteCount,
}

impl Slot {
    const ALL: [Slot; 5] =
        [Slot::Question, Slot::QueryImage, Slot::ImageSearchResult, Slot::WebsiteInformation, Slot::WebsiteCount];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Question => "question",
            Slot::QueryImage => "query_image",
            Slot::ImageSearchResult => "image_search_result",
            Slot::WebsiteInformation => "website_information",
            Slot::WebsiteCount => "website_count",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Text(&'static str),
    Slot(Slot),
}

/// Splits a template into literal text and placeholders, in order.
pub fn pieces(template: &'static str) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let slot = rest[open..].find('}').and_then(|close| {
            let name = &rest[open + 1..open + close];
            Slot::ALL.into_iter().find(|s| s.name() == name).map(|s| (s, open + close + 1))
        });
        match slot {
            Some((slot, end)) => {
                if open > 0 {
                    out.push(Piece::Text(&rest[..open]));
                }
                out.push(Piece::Slot(slot));
                rest = &rest[end..];
            }
            None => {
                out.push(Piece::Text(&rest[..=open]));
                rest = &rest[open + 1..];
            }
        }
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    out
}
