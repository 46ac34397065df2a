//! Locale negotiation for label matrices.

use emomap_core::TagMap;

/// Language ranges from an `Accept-Language` value, best first.
pub fn accept_language(value: &str) -> Vec<String> {
    let mut ranges: Vec<(f32, usize, String)> = value
        .split(',')
        .enumerate()
        .filter_map(|(i, part)| {
            let mut pieces = part.split(';');
            let tag = pieces.next()?.trim();
            if tag.is_empty() || tag == "*" {
                return None;
            }
            let q = pieces
                .find_map(|p| p.trim().strip_prefix("q=").map(|q| q.trim().parse::<f32>()))
                .unwrap_or(Ok(1.0))
                .ok()?;
            (q > 0.0).then(|| (q, i, tag.to_string()))
        })
        .collect();
    ranges.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    ranges.into_iter().map(|(_, _, t)| t).collect()
}

/// Picks the locale whose labels should be shown. An explicit query
/// parameter decides on its own; otherwise the best `Accept-Language` match
/// is used, then the experiment default. `None` means the map's default
/// labels.
pub fn negotiate(
    map: &TagMap,
    query: Option<&str>,
    accept: Option<&str>,
    experiment_default: &str,
) -> Option<String> {
    if let Some(q) = query {
        return map.match_locale(q).map(str::to_string);
    }
    if let Some(a) = accept {
        if let Some(l) = accept_language(a).iter().find_map(|t| map.match_locale(t)) {
            return Some(l.to_string());
        }
    }
    map.match_locale(experiment_default).map(str::to_string)
}
