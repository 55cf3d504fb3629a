use serde::{Deserialize, Serialize};

/// Longest answer, in whitespace-separated words, kept as an anchor.
pub const MAX_ANSWER_WORDS: usize = 5;

/// A single-hop text question with its source page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorQA {
    pub question: String,
    pub answer: String,
    pub title: String,
    pub passage: String,
}

impl AnchorQA {
    fn usable(&self) -> bool {
        let fields = [&self.question, &self.answer, &self.title, &self.passage];
        fields.iter().all(|f| !f.trim().is_empty()) && self.answer.split_whitespace().count() <= MAX_ANSWER_WORDS
    }
}

/// Keeps anchors with every field present and a short answer.
pub fn filter_anchors(records: Vec<AnchorQA>) -> Vec<AnchorQA> {
    records.into_iter().filter(AnchorQA::usable).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor(answer: &str, passage: &str) -> AnchorQA {
        AnchorQA {
            question: "Who starred as Mary Poppins in Mary Poppins Returns?".into(),
            answer: answer.into(),
            title: "Mary Poppins Returns".into(),
            passage: passage.into(),
        }
    }

    #[test]
    fn keeps_short_complete_anchors() {
        let kept = filter_anchors(vec![
            anchor("Emily Blunt", "text"),
            anchor("one two three four five six seven", "text"),
            anchor("Emily Blunt", " "),
            anchor("one two three four five", "text"),
        ]);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].answer, "Emily Blunt");
        assert_eq!(kept[1].answer.split_whitespace().count(), 5);
    }
}
