"""Semantic dataset retrieval: build an index, rank prompts, measure hit@k.

Uses the deterministic token-hash embedder so the demo runs without any
model or service; swap in an HTTP provider pointing at a real sentence
encoder for production-quality rankings.
"""

from _workspace import fresh_workspace, materialize_all

from statviz.catalog import list_materialized, stored_metadata
from statviz.retrieval import (
    HashedEmbeddings,
    build_index,
    exact_match_at_k,
    load_index,
    query,
    save_index,
)

PROMPTS = {
    "Plot the volume of cheese production in the Netherlands": "7425eng",
    "Plot the regional distribution of newborn boys and girls": "85332ENG",
    "How did consumer prices for food develop?": "83131ENG",
}


def main() -> None:
    workspace = fresh_workspace("retrieval")
    data_dir = materialize_all(workspace)

    provider = HashedEmbeddings(dim=128)
    metas = [stored_metadata(data_dir, ref) for ref in list_materialized(data_dir)]
    index = build_index(metas, provider)
    save_index(index, workspace / "index")
    index = load_index(workspace / "index")
    print(f"index: {len(index)} tables, provider {index.provider_id}, "
          f"dim {index.dim}")

    gold_ranks = {}
    for prompt, gold in PROMPTS.items():
        matches = query(index, prompt, k=3, provider=provider)
        print(f"\nprompt: {prompt}")
        for match in matches:
            marker = "  <- gold" if match.ref == gold else ""
            print(f"  {match.rank}. {match.ref}  score {match.score:+.4f}{marker}")
        gold_ranks[prompt] = next(
            (m.rank for m in query(index, prompt, k=len(index), provider=provider)
             if m.ref == gold), len(index) + 1)

    rates = exact_match_at_k(gold_ranks, ks=[1, 2, 3])
    print(f"\nhit rates over {rates.n_queries} prompts: "
          + ", ".join(f"hit@{k}={v:.2f}" for k, v in rates.hits_at.items()))


if __name__ == "__main__":
    main()
