use std::time::Duration;

use serde::Deserialize;

/// What a page source returns for a title.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PageContent {
    /// An ordinary article: canonical title and lead-section summary.
    Article { title: String, summary: String },
    /// A disambiguation page with its suggested resolutions, in page order.
    Disambiguation { title: String, options: Vec<String> },
    Missing,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct SourceError(pub String);

/// An external source of encyclopedia pages.
pub trait PageSource: Send + Sync {
    /// Page titles recommended for `query`, best first. An empty list means
    /// no page exists.
    fn search(&self, query: &str) -> Result<Vec<String>, SourceError>;

    fn page(&self, title: &str) -> Result<PageContent, SourceError>;
}

/// MediaWiki API client for English Wikipedia.
///
/// Search uses `list=search`; page text is the plain-text lead section from
/// `prop=extracts&exintro`.
pub struct WikipediaSource {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl WikipediaSource {
    pub const DEFAULT_ENDPOINT: &'static str = "https://en.wikipedia.org/w/api.php";
    const USER_AGENT: &'static str = concat!("wikistance/", env!("CARGO_PKG_VERSION"), " (stance knowledge fetcher)");

    pub fn new() -> Result<Self, SourceError> {
        Self::with_endpoint(Self::DEFAULT_ENDPOINT)
    }

    pub fn with_endpoint(endpoint: &str) -> Result<Self, SourceError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(Self::USER_AGENT)
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| SourceError(format!("http client: {e}")))?;
        Ok(Self { client, endpoint: endpoint.to_string() })
    }

    fn get<T: for<'de> Deserialize<'de>>(&self, params: &[(&str, &str)]) -> Result<T, SourceError> {
        let resp = self
            .client
            .get(&self.endpoint)
            .query(params)
            .send()
            .map_err(|e| SourceError(format!("request failed: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(SourceError(format!("http status {status}")));
        }
        resp.json::<T>().map_err(|e| SourceError(format!("bad response body: {e}")))
    }

    fn disambiguation_options(&self, title: &str) -> Result<Vec<String>, SourceError> {
        let resp: ParseResponse = self.get(&[
            ("action", "parse"),
            ("page", title),
            ("prop", "links"),
            ("format", "json"),
            ("formatversion", "2"),
        ])?;
        Ok(resp
            .parse
            .map(|p| p.links.into_iter().filter(|l| l.ns == 0 && l.exists).map(|l| l.title).collect())
            .unwrap_or_default())
    }
}

impl PageSource for WikipediaSource {
    fn search(&self, query: &str) -> Result<Vec<String>, SourceError> {
        let resp: SearchResponse = self.get(&[
            ("action", "query"),
            ("list", "search"),
            ("srsearch", query),
            ("srprop", ""),
            ("srlimit", "10"),
            ("format", "json"),
            ("formatversion", "2"),
        ])?;
        if let Some(err) = resp.error {
            return Err(SourceError(format!("api error: {}", err.info)));
        }
        Ok(resp.query.map(|q| q.search.into_iter().map(|h| h.title).collect()).unwrap_or_default())
    }

    fn page(&self, title: &str) -> Result<PageContent, SourceError> {
        let resp: ExtractResponse = self.get(&[
            ("action", "query"),
            ("prop", "extracts|pageprops"),
            ("ppprop", "disambiguation"),
            ("exintro", "1"),
            ("explaintext", "1"),
            ("redirects", "1"),
            ("titles", title),
            ("format", "json"),
            ("formatversion", "2"),
        ])?;
        let Some(page) = resp.query.and_then(|q| q.pages.into_iter().next()) else {
            return Ok(PageContent::Missing);
        };
        if page.missing || page.invalid {
            return Ok(PageContent::Missing);
        }
        if page.pageprops.as_ref().is_some_and(|p| p.disambiguation.is_some()) {
            let options = self.disambiguation_options(&page.title)?;
            return Ok(PageContent::Disambiguation { title: page.title, options });
        }
        Ok(PageContent::Article { title: page.title, summary: page.extract.unwrap_or_default().trim().to_string() })
    }
}

#[derive(Deserialize)]
struct ApiError {
    info: String,
}

#[derive(Deserialize)]
struct SearchResponse {
    query: Option<SearchQuery>,
    error: Option<ApiError>,
}

#[derive(Deserialize)]
struct SearchQuery {
    search: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    title: String,
}

#[derive(Deserialize)]
struct ExtractResponse {
    query: Option<ExtractQuery>,
}

#[derive(Deserialize)]
struct ExtractQuery {
    pages: Vec<ExtractPage>,
}

#[derive(Deserialize)]
struct ExtractPage {
    title: String,
    extract: Option<String>,
    #[serde(default)]
    missing: bool,
    #[serde(default)]
    invalid: bool,
    pageprops: Option<PageProps>,
}

#[derive(Deserialize)]
struct PageProps {
    disambiguation: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct ParseResponse {
    parse: Option<ParseBody>,
}

#[derive(Deserialize)]
struct ParseBody {
    links: Vec<ParseLink>,
}

#[derive(Deserialize)]
struct ParseLink {
    ns: i64,
    title: String,
    #[serde(default)]
    exists: bool,
}
