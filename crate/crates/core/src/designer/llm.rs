//! Designer backed by a chat-completion endpoint.

use super::{DesignerError, DesignerPort};
use crate::chat::{extract_code_blocks, ChatClient, ChatMessage};
use crate::guidance::GuidanceBundle;
use crate::worldmodel::StateDescriptor;

pub const DESIGNER_SYSTEM_PROMPT: &str = include_str!("../../prompts/designer_system.v1.txt");

pub struct LlmDesigner {
    client: ChatClient,
    catalog: Vec<StateDescriptor>,
}

impl LlmDesigner {
    pub fn new(client: ChatClient, catalog: &[StateDescriptor]) -> Self {
        Self {
            client,
            catalog: catalog.to_vec(),
        }
    }

    pub fn messages(&self, bundle: &GuidanceBundle) -> Vec<ChatMessage> {
        let listing: Vec<String> = self
            .catalog
            .iter()
            .map(|s| format!("- {} ({}, {})", s.name, s.kind, s.arity))
            .collect();
        let user = format!(
            "{}\n# State catalog\n{}\n",
            bundle.render(),
            listing.join("\n")
        );
        vec![ChatMessage::system(DESIGNER_SYSTEM_PROMPT.trim_end()), ChatMessage::user(user)]
    }
}

impl DesignerPort for LlmDesigner {
    /// The seed is ignored: sampling happens at the endpoint.
    fn propose(&self, bundle: &GuidanceBundle, k: usize, _seed: u64) -> Result<Vec<String>, DesignerError> {
        let messages = self.messages(bundle);
        let completions = if self.client.config().batch_completions {
            self.client.complete(&messages, k)?
        } else {
            let mut all = Vec::with_capacity(k);
            for _ in 0..k {
                all.extend(self.client.complete(&messages, 1)?);
            }
            all
        };
        let texts: Vec<String> = completions
            .iter()
            .filter_map(|c| extract_code_blocks(c).into_iter().next())
            .filter(|t| !t.trim().is_empty())
            .take(k)
            .collect();
        if texts.is_empty() {
            return Err(DesignerError::NoCode { requested: k });
        }
        Ok(texts)
    }
}
