"""Word lists used by the caption parser and the rule-based counter-action backend."""

# base form -> past participle
IRREGULAR_PARTICIPLES = {
    "be": "been",
    "bear": "borne",
    "beat": "beaten",
    "become": "become",
    "bend": "bent",
    "bite": "bitten",
    "blow": "blown",
    "break": "broken",
    "bring": "brought",
    "build": "built",
    "buy": "bought",
    "catch": "caught",
    "choose": "chosen",
    "cut": "cut",
    "dig": "dug",
    "do": "done",
    "draw": "drawn",
    "drink": "drunk",
    "drive": "driven",
    "eat": "eaten",
    "feed": "fed",
    "feel": "felt",
    "fight": "fought",
    "find": "found",
    "fly": "flown",
    "freeze": "frozen",
    "get": "gotten",
    "give": "given",
    "grow": "grown",
    "hang": "hung",
    "have": "had",
    "hear": "heard",
    "hide": "hidden",
    "hit": "hit",
    "hold": "held",
    "hug": "hugged",
    "keep": "kept",
    "lay": "laid",
    "lead": "led",
    "leave": "left",
    "lend": "lent",
    "let": "let",
    "lie": "lain",
    "light": "lit",
    "lose": "lost",
    "make": "made",
    "meet": "met",
    "pay": "paid",
    "put": "put",
    "read": "read",
    "ride": "ridden",
    "ring": "rung",
    "run": "run",
    "say": "said",
    "see": "seen",
    "sell": "sold",
    "send": "sent",
    "set": "set",
    "shake": "shaken",
    "shoot": "shot",
    "show": "shown",
    "shut": "shut",
    "sing": "sung",
    "sit": "sat",
    "sleep": "slept",
    "slide": "slid",
    "speak": "spoken",
    "spin": "spun",
    "spread": "spread",
    "stand": "stood",
    "steal": "stolen",
    "stick": "stuck",
    "strike": "struck",
    "swim": "swum",
    "swing": "swung",
    "take": "taken",
    "teach": "taught",
    "tear": "torn",
    "tell": "told",
    "think": "thought",
    "throw": "thrown",
    "wake": "woken",
    "wear": "worn",
    "win": "won",
    "wind": "wound",
    "write": "written",
}

# irregular inflected surface forms -> base
IRREGULAR_LEMMAS = {
    "has": "have",
    "having": "have",
    "is": "be",
    "are": "be",
    "was": "be",
    "were": "be",
    "lying": "lie",
    "dying": "die",
    "tying": "tie",
}

# default verb lexicon for the caption grammar (base forms)
VERBS = frozenset({
    "carry", "catch", "chase", "climb", "cover", "cross", "cut", "drink",
    "drive", "eat", "feed", "fly", "follow", "graze", "grab", "hang", "have",
    "hit", "hold", "hug", "kick", "kiss", "lay", "lead", "lean", "lick",
    "look", "paint", "park", "pet", "play", "pull", "push", "read", "ride",
    "sit", "ski", "stand", "surf", "swing", "talk", "throw", "touch", "use",
    "walk", "watch", "wear",
})

# verbs whose natural complement is introduced by a particle
PHRASAL = {
    "sit": ("on", "in", "at"),
    "stand": ("on", "in", "near", "behind"),
    "lay": ("on", "in"),
    "lie": ("on", "in"),
    "lean": ("on", "against"),
    "look": ("at",),
    "hang": ("from", "on"),
    "walk": ("on", "in", "with"),
    "park": ("on", "along"),
    "talk": ("on", "to"),
    "play": ("with", "on", "in"),
}

DETERMINERS = frozenset({
    "a", "an", "the", "some", "this", "that", "these", "those", "his", "her",
    "its", "their", "two", "three", "four", "several", "many", "one",
})

AUXILIARIES = frozenset({"is", "are", "was", "were", "be", "being", "been", "am"})

PREPOSITIONS = frozenset({
    "on", "in", "at", "near", "above", "below", "under", "behind", "beside",
    "beneath", "over", "with", "of", "by", "for", "from", "into", "onto",
    "against", "along", "across", "around", "between", "next", "inside",
    "outside", "underneath", "toward", "towards", "through", "to", "front",
    "top", "while",
})

CONJUNCTIONS = frozenset({"and", "or", "but", "while", "as", "who", "which", "that"})
