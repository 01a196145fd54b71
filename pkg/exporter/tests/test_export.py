"""Exporter integration: containers must parse in the merge toolkit's reader."""

import json

import numpy as np
import pytest
import torch

from activation_exporter import (
    ExportError,
    ExportJob,
    export_activations,
    export_reference_embeddings,
)

# the cross-component contract: files written here are read by the primary toolkit
from conmerge import load_activation_set, load_reference_similarity, read_container
from conmerge.errors import ValidationError

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "how", "to", "reset", "a", "password", "track", "an", "order",
    "billing", "statement", "help", "contacts", "phone", "book", "add",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly initialized BERT saved locally (no hub access needed)."""
    from transformers import BertConfig, BertModel, BertTokenizer

    d = tmp_path_factory.mktemp("tiny_bert")
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=64,
    )
    torch.manual_seed(1234)
    BertModel(config).save_pretrained(d)
    (d / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    BertTokenizer(str(d / "vocab.txt")).save_pretrained(d)
    return str(d)


@pytest.fixture
def dev_set(tmp_path):
    queries = [
        ("q0", "how to reset a password"),
        ("q1", "track an order"),
        ("q2", "billing statement help"),
    ]
    path = tmp_path / "devset.jsonl"
    path.write_text("\n".join(json.dumps({"id": i, "query": q}) for i, q in queries) + "\n")
    return path, queries


class TestExportActivations:
    def test_container_parses_in_primary_reader(self, tiny_model_dir, dev_set, tmp_path):
        path, queries = dev_set
        out = tmp_path / "acts.st"
        export_activations(ExportJob(model_ref=tiny_model_dir, dev_set_path=str(path), output_path=str(out)))
        acts = load_activation_set(out, "tiny")
        assert acts.num_layers == 2
        for l in range(2):
            assert acts.layers[l].shape == (3, 16)
        assert acts.query_ids == [i for i, _ in queries]  # metadata order == file order

    def test_pooling_matches_manual_two_token_oracle(self, tiny_model_dir, dev_set, tmp_path):
        """Per query, exporter rows equal a by-hand forward + positionwise max within 1e-5."""
        from transformers import AutoModel, AutoTokenizer

        path, queries = dev_set
        out = tmp_path / "acts.st"
        export_activations(ExportJob(model_ref=tiny_model_dir, dev_set_path=str(path), output_path=str(out)))
        ckpt = read_container(out)

        model = AutoModel.from_pretrained(tiny_model_dir).float().eval()
        tokenizer = AutoTokenizer.from_pretrained(tiny_model_dir)
        for row, (_, query) in enumerate(queries):
            enc = tokenizer([query], return_tensors="pt")
            with torch.no_grad():
                hidden = model(**enc, output_hidden_states=True).hidden_states
            for l in range(2):
                manual = hidden[l + 1][0].max(dim=0).values.numpy()
                got = ckpt.tensors[f"layer.{l}"].data[row]
                np.testing.assert_allclose(got, manual, atol=1e-5)

    def test_deterministic_across_runs(self, tiny_model_dir, dev_set, tmp_path):
        path, _ = dev_set
        for tag in ("one", "two"):
            export_activations(
                ExportJob(model_ref=tiny_model_dir, dev_set_path=str(path), output_path=str(tmp_path / f"{tag}.st"))
            )
        assert (tmp_path / "one.st").read_bytes() == (tmp_path / "two.st").read_bytes()

    def test_batching_does_not_change_values(self, tiny_model_dir, dev_set, tmp_path):
        path, _ = dev_set
        export_activations(
            ExportJob(model_ref=tiny_model_dir, dev_set_path=str(path), output_path=str(tmp_path / "b1.st"), batch_size=1)
        )
        export_activations(
            ExportJob(model_ref=tiny_model_dir, dev_set_path=str(path), output_path=str(tmp_path / "b8.st"), batch_size=8)
        )
        a = read_container(tmp_path / "b1.st")
        b = read_container(tmp_path / "b8.st")
        for name in a.tensors:
            np.testing.assert_allclose(a.tensors[name].data, b.tensors[name].data, atol=1e-5)

    def test_layer_selection(self, tiny_model_dir, dev_set, tmp_path):
        path, _ = dev_set
        out = tmp_path / "one_layer.st"
        export_activations(
            ExportJob(model_ref=tiny_model_dir, dev_set_path=str(path), output_path=str(out), layers=[1])
        )
        ckpt = read_container(out)
        assert set(ckpt.tensors) == {"layer.0"}
        assert json.loads(ckpt.metadata["source_layers"]) == [1]

    def test_empty_dev_set_rejected(self, tiny_model_dir, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        with pytest.raises(ExportError, match="empty dev set"):
            export_activations(ExportJob(model_ref=tiny_model_dir, dev_set_path=str(empty), output_path=str(tmp_path / "x.st")))

    def test_model_load_failure(self, dev_set, tmp_path):
        path, _ = dev_set
        with pytest.raises(ExportError, match="failed to load model"):
            export_activations(ExportJob(model_ref=str(tmp_path / "no_such_model"), dev_set_path=str(path), output_path=str(tmp_path / "x.st")))


class TestExportReferenceEmbeddings:
    def test_feeds_primary_reference_loader(self, tiny_model_dir, dev_set, tmp_path):
        path, queries = dev_set
        out = tmp_path / "ref.st"
        export_reference_embeddings(str(path), tiny_model_dir, str(out))
        ref = load_reference_similarity(out)
        assert ref.query_ids == [i for i, _ in queries]
        assert ref.values.shape == (3, 3)

    def test_duplicate_queries_embed_identically(self, tiny_model_dir, tmp_path):
        path = tmp_path / "dup.jsonl"
        path.write_text(
            json.dumps({"id": "a", "query": "track an order"})
            + "\n"
            + json.dumps({"id": "b", "query": "track an order"})
            + "\n"
        )
        out = tmp_path / "ref.st"
        export_reference_embeddings(str(path), tiny_model_dir, str(out))
        ckpt = read_container(out)
        emb = ckpt.tensors["embeddings"].data
        np.testing.assert_array_equal(emb[0], emb[1])

    def test_single_query_file_is_valid_but_primary_rejects(self, tiny_model_dir, tmp_path):
        path = tmp_path / "one.jsonl"
        path.write_text(json.dumps({"id": "a", "query": "billing statement help"}) + "\n")
        out = tmp_path / "ref.st"
        export_reference_embeddings(str(path), tiny_model_dir, str(out))
        ckpt = read_container(out)  # the file itself is well-formed
        assert ckpt.tensors["embeddings"].shape == (1, 16)
        with pytest.raises(ValidationError, match="at least 2 rows"):
            load_reference_similarity(out)

    def test_rows_are_unit_norm(self, tiny_model_dir, dev_set, tmp_path):
        path, _ = dev_set
        out = tmp_path / "ref.st"
        export_reference_embeddings(str(path), tiny_model_dir, str(out))
        emb = read_container(out).tensors["embeddings"].data
        np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-5)


class TestCli:
    def test_export_activations_subcommand(self, tiny_model_dir, dev_set, tmp_path):
        from activation_exporter.cli import dispatch

        path, _ = dev_set
        out = tmp_path / "acts.st"
        code = dispatch(
            ["export-activations", "--model", tiny_model_dir, "--dev-set", str(path), "--out", str(out)]
        )
        assert code == 0 and out.exists()

    def test_export_embeddings_subcommand(self, tiny_model_dir, dev_set, tmp_path):
        from activation_exporter.cli import dispatch

        path, _ = dev_set
        out = tmp_path / "ref.st"
        code = dispatch(
            ["export-embeddings", "--encoder", tiny_model_dir, "--dev-set", str(path), "--out", str(out)]
        )
        assert code == 0 and out.exists()

    def test_no_subcommand_usage(self):
        from activation_exporter.cli import dispatch

        assert dispatch([]) == 1

    def test_missing_model_exit_code(self, dev_set, tmp_path):
        from activation_exporter.cli import dispatch

        path, _ = dev_set
        code = dispatch(
            ["export-activations", "--model", str(tmp_path / "ghost"), "--dev-set", str(path), "--out", str(tmp_path / "x.st")]
        )
        assert code == 2
