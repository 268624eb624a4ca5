//! Read a labeled TSV with a few broken lines, then score predictions
//! with macro-F1.

use contrastive_workbench::workbench::{macro_f1, parse_tsv, Split};

const TSV: &str = "label\ttext
# comments and blank lines are skipped

joy\twhat a lovely morning
anger\tthis queue is ridiculous
no separator on this line
joy\t
sadness\tmissing you today
anger\tstop calling me
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ingested = parse_tsv(TSV, Split::Test, "inline.tsv")?;
    for m in &ingested.malformed {
        println!("skipped line {}: {} ({:?})", m.line, m.reason, m.content);
    }
    let corpus = ingested.corpus;
    println!("{} examples, classes {:?}", corpus.len(), corpus.classes());

    let gold = corpus.labels();
    let predicted = vec![0, 1, 0, 1];
    let report = macro_f1(&gold, &predicted, corpus.classes().len())?;
    for (c, name) in corpus.classes().iter().enumerate() {
        println!(
            "{name:>8}: P {:.3} R {:.3} F1 {:.3} support {}",
            report.precision[c], report.recall[c], report.f1[c], report.support[c]
        );
    }
    println!("macro-F1 {:.4}, accuracy {:.4}", report.macro_f1, report.accuracy);
    println!("confusion (gold rows): {:?}", report.confusion);
    Ok(())
}
