import pytest

from noderag.tokenizer import SimpleTokenizer, get_tokenizer, window_text


def test_count_words_and_punctuation():
    tok = SimpleTokenizer()
    assert tok.count("Hinton was awarded the Nobel Prize.") == 7
    assert tok.count("") == 0
    assert tok.count("   \n\t ") == 0


def test_spans_cover_tokens_in_order():
    tok = SimpleTokenizer()
    text = "a bb, ccc"
    spans = tok.spans(text)
    assert [text[s:e] for s, e in spans] == ["a", "bb", ",", "ccc"]


def test_window_text_slices_original():
    tok = SimpleTokenizer()
    text = "one two three four five"
    spans = tok.spans(text)
    assert window_text(text, spans, 1, 4) == "two three four"
    assert window_text(text, spans, 0, 99) == text
    assert window_text(text, spans, 3, 3) == ""


def test_get_tokenizer_unknown():
    with pytest.raises(ValueError):
        get_tokenizer("nope")
    assert get_tokenizer().name == "simple-regex"
