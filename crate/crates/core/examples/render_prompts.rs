//! Lists the built-in templates and renders one conditional prompt.

use ponte::prompting::{self, DEFAULT_TEMPLATE_ID};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let templates = prompting::registry();
    for t in &templates {
        let kind = if t.requires_condition() { "conditional" } else { "plain" };
        println!("{:<10} {:<12} {}", t.id(), kind, t.pattern());
    }

    let t9 = prompting::find(&templates, DEFAULT_TEMPLATE_ID)?;
    let prompt = t9.render("Best fish I have ever had.", "the emotion")?;
    println!("\n{}", prompt.rendered());

    let eol = prompting::find(&templates, "PromptEOL")?;
    println!("{}", eol.render("Best fish I have ever had.", "")?.rendered());

    // custom templates come from tab-separated files
    let extra = prompting::parse_templates("mine\tSummarize \"{text}\" by {condition} in one word: \"\n", "inline")?;
    println!("{}", extra[0].render("I ran to the store.", "the physical actions")?.rendered());
    Ok(())
}
