/// Function words used by the question template; reserved out of every vocabulary.
pub const TEMPLATE_WORDS: [&str; 4] = ["what", "is", "the", "of"];

/// The fixed question template, one shape per hop count:
/// `what is the <rN> of ... the <r1> of <anchor>`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QuestionTemplate;

impl QuestionTemplate {
    /// Renders a question; `relations` are in hop order (innermost first).
    pub fn render(&self, anchor: &str, relations: &[&str]) -> Vec<String> {
        let mut tokens = vec!["what".to_string(), "is".to_string()];
        for rel in relations.iter().rev() {
            tokens.push("the".into());
            tokens.push((*rel).to_string());
            tokens.push("of".into());
        }
        tokens.push(anchor.to_string());
        tokens
    }

    /// Inverse of [`render`](Self::render): `(anchor, relations in hop order)`.
    pub fn parse(&self, tokens: &[String]) -> Option<(String, Vec<String>)> {
        let (anchor, body) = tokens.split_last()?;
        let body = body.strip_prefix(&["what".to_string(), "is".to_string()][..])?;
        if body.is_empty() || body.len() % 3 != 0 {
            return None;
        }
        let mut relations = Vec::with_capacity(body.len() / 3);
        for chunk in body.chunks(3) {
            if chunk[0] != "the" || chunk[2] != "of" {
                return None;
            }
            relations.push(chunk[1].clone());
        }
        relations.reverse();
        Some((anchor.clone(), relations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse_round_trip() {
        let t = QuestionTemplate;
        let tokens = t.render("kalo", &["born-in", "part-of", "owned-by"]);
        assert_eq!(
            tokens.join(" "),
            "what is the owned-by of the part-of of the born-in of kalo"
        );
        let (anchor, rels) = t.parse(&tokens).unwrap();
        assert_eq!(anchor, "kalo");
        assert_eq!(rels, vec!["born-in", "part-of", "owned-by"]);
        assert!(t.parse(&["kalo".to_string()]).is_none());
    }
}
