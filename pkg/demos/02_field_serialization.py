"""
From structured records to encoder input text
==============================================

Shows how a review record becomes the two text strings the encoders
consume: a context string for the guest side and a review string for the
text side. Empty fields are dropped rather than serialized as blanks.
"""

from revrank.dataset import (
    AccommodationContext,
    GuestContext,
    GuestType,
    Month,
    Review,
    ReviewRecord,
)
from revrank.encoder import build_vocabulary, tokenize
from revrank.textualize import serialize_record

record = ReviewRecord(
    guest=GuestContext(
        guest_type=GuestType.FAMILY_WITH_CHILDREN,
        guest_country="Netherlands",
        room_nights=4,
        month=Month.JULY,
    ),
    accommodation=AccommodationContext(
        accommodation_id="acc_00042",
        accommodation_type="Apartment",
        accommodation_score=8.4,
        accommodation_country="Italy",
        accommodation_star_rating=4.0,
        location_is_beach=True,
        location_is_ski=False,
        location_is_city_center=False,
    ),
    review=Review(
        review_title="Perfect for kids",
        review_positive="Pool was clean and the staff were friendly",
        review_negative="",
        review_score=9.0,
        review_helpful_votes=3,
    ),
)

context_text, review_text = serialize_record(record)
print("--- context string ---")
print(context_text)
print("--- review string ---")
print(review_text)

# Note review_negative is absent above: empty fields never emit a line,
# so the encoder does not learn from placeholder tokens.

# Tokenization lowercases and splits on non-alphanumerics.
tokens = tokenize(review_text)
print(f"review tokens ({len(tokens)}): {tokens}")

# Vocabularies are built from token frequencies over both strings of each
# record. Out-of-vocabulary tokens fold into the <unk> slot at encode time.
corpus = [tokenize(context_text), tokenize(review_text)]
vocab = build_vocabulary(corpus, min_frequency=1, max_size=1000)
print(f"vocabulary size including <unk>: {len(vocab)}")
print(f"id of 'pool': {vocab.lookup('pool')}, id of 'wifi': {vocab.lookup('wifi')} (unk is {vocab.unk_index})")
