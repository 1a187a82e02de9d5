#include "dig/corpus.hpp"

namespace dig {

namespace {
constexpr std::string_view kWords[] = {
    "about", "above", "across", "act", "add", "after", "again", "age", "ago", "air", "all",
    "almost", "alone", "along", "already", "also", "always", "among", "and", "animal", "answer",
    "any", "appear", "apple", "area", "arm", "army", "around", "art", "ask", "away", "baby",
    "back", "bad", "ball", "bank", "base", "bear", "beat", "beauty", "bed", "before", "began",
    "begin", "behind", "believe", "bell", "best", "better", "between", "big", "bird", "black",
    "blood", "blue", "board", "boat", "body", "bone", "book", "born", "both", "bottom", "box",
    "boy", "bread", "break", "bright", "bring", "brother", "brown", "build", "burn", "busy",
    "buy", "call", "came", "camp", "can", "cap", "capital", "captain", "car", "card", "care",
    "carry", "case", "cat", "catch", "cause", "cell", "center", "certain", "chair", "chance",
    "change", "charge", "check", "chick", "chief", "child", "choose", "church", "circle",
    "city", "claim", "class", "clean", "clear", "climb", "clock", "close", "cloud", "coast",
    "coat", "cold", "color", "come", "common", "company", "complete", "contain", "control",
    "cook", "cool", "copy", "corn", "corner", "cost", "cotton", "could", "count", "country",
    "course", "cover", "cow", "crop", "cross", "crowd", "cry", "current", "cut", "dance",
    "dark", "day", "dead", "deal", "dear", "death", "decide", "deep", "degree", "depend",
    "describe", "desert", "design", "detail", "develop", "dictionary", "die", "differ",
    "difficult", "dinner", "direct", "discuss", "distant", "divide", "doctor", "does", "dog",
    "dollar", "done", "door", "double", "down", "draw", "dream", "dress", "drink", "drive",
    "drop", "dry", "duck", "during", "each", "ear", "early", "earth", "east", "easy", "eat",
    "edge", "effect", "egg", "eight", "either", "electric", "element", "else", "end", "enemy",
    "energy", "engine", "enough", "enter", "equal", "even", "evening", "event", "ever", "every",
    "exact", "example", "except", "excite", "exercise", "expect", "experience", "explain",
    "eye", "face", "fact", "fair", "fall", "family", "famous", "far", "farm", "fast", "fat",
    "father", "favor", "fear", "feed", "feel", "feet", "fell", "few", "field", "fig", "fight",
    "figure", "fill", "final", "find", "fine", "finger", "finish", "fire", "first", "fish",
    "fit", "five", "flat", "floor", "flow", "flower", "fly", "follow", "food", "foot", "force",
    "forest", "form", "forward", "found", "four", "free", "fresh", "friend", "from", "front",
    "fruit", "full", "fun", "game", "garden", "gas", "gather", "gave", "general", "gentle",
    "get", "girl", "give", "glad", "glass", "gold", "gone", "good", "got", "govern", "grand",
    "grass", "gray", "great", "green", "grew", "ground", "group", "grow", "guess", "guide",
    "gun", "hair", "half", "hand", "happen", "happy", "hard", "has", "hat", "have", "head",
    "hear", "heard", "heart", "heat", "heavy", "held", "help", "her", "here", "high", "hill",
    "him", "his", "history", "hit", "hold", "hole", "home", "hope", "horse", "hot", "hotel",
    "hour", "house", "huge", "human", "hundred", "hunt", "hurry", "ice", "idea", "inch",
    "include", "indicate", "insect", "instant", "iron", "island", "job", "join", "joy", "jump",
    "just", "keep", "kept", "key", "kill", "kind", "king", "kitchen", "knew", "know", "lady",
    "lake", "land", "language", "large", "last", "late", "laugh", "law", "lay", "lead", "learn",
    "least", "leave", "left", "leg", "length", "less", "let", "letter", "level", "lie", "life",
    "lift", "light", "like", "line", "liquid", "list", "listen", "little", "live", "locate",
    "log", "lone", "long", "look", "lost", "lot", "loud", "love", "low", "machine", "made",
    "magnet", "main", "major", "make", "man", "many", "map", "mark", "market", "mass", "master",
    "match", "material", "matter", "may", "meant", "measure", "meat", "meet", "melody", "men",
    "metal", "method", "middle", "might", "mile", "milk", "million", "mind", "mine", "minute",
    "miss", "mix", "modern", "moment", "money", "month", "moon", "more", "morning", "most",
    "mother", "motion", "mount", "mountain", "mouth", "move", "much", "music", "must", "name",
    "nation", "natural", "nature", "near", "neck", "need", "neighbor", "never", "new", "next",
    "night", "nine", "noise", "none", "noon", "nor", "north", "nose", "note", "nothing",
    "notice", "noun", "now", "number", "numeral", "object", "observe", "ocean", "off", "offer",
    "office", "often", "oil", "old", "once", "one", "only", "open", "operate", "opposite",
    "order", "organ", "origin", "other", "our", "out", "over", "own", "oxygen", "page", "paint",
    "pair", "paper", "paragraph", "parent", "part", "party", "pass", "past", "path", "pay",
    "people", "perhaps", "period", "person", "picture", "piece", "pitch", "place", "plain",
    "plan", "plane", "planet", "plant", "play", "please", "plural", "poem", "point", "poor",
    "populate", "port", "pose", "position", "possible", "post", "pound", "power", "practice",
    "prepare", "present", "press", "pretty", "print", "probable", "problem", "process",
    "produce", "product", "proper", "property", "protect", "prove", "provide", "pull", "push",
    "put", "quart", "question", "quick", "quiet", "quite", "quotient", "race", "radio", "rail",
    "rain", "raise", "ran", "range", "rather", "reach", "read", "ready", "real", "reason",
    "receive", "record", "red", "region", "remember", "repeat", "reply", "rest", "result",
    "rich", "ride", "right", "ring", "rise", "river", "road", "rock", "roll", "room", "root",
    "rope", "rose", "round", "row", "rub", "rule", "run", "safe", "said", "sail", "salt",
    "same", "sand", "sat", "save", "saw", "say", "scale", "school", "science", "score", "sea",
    "search", "season", "seat", "second", "section", "see", "seed", "seem", "segment", "select",
    "self", "sell", "send", "sense", "sent", "sentence", "separate", "serve", "set", "settle",
    "seven", "several", "shall", "shape", "share", "sharp", "sheet", "shell", "shine", "ship",
    "shoe", "shop", "shore", "short", "should", "shoulder", "shout", "show", "side", "sight",
    "sign", "silent", "silver", "simple", "since", "sing", "single", "sister", "sit", "six",
    "size", "skill", "skin", "sky", "sleep", "slip", "slow", "small", "smell", "smile", "snow",
    "soft", "soil", "soldier", "solution", "solve", "some", "son", "song", "soon", "sound",
    "south", "space", "speak", "special", "speech", "speed", "spell", "spend", "spoke", "spot",
    "spread", "spring", "square", "stand", "star", "start", "state", "station", "stay", "stead",
    "steam", "steel", "step", "stick", "still", "stone", "stood", "stop", "store", "story",
    "straight", "strange", "stream", "street", "stretch", "string", "strong", "student",
    "study", "subject", "success", "such", "sudden", "suffix", "sugar", "suit", "summer", "sun",
    "supply", "support", "sure", "surface", "surprise", "swim", "syllable", "symbol", "system",
    "table", "tail", "take", "talk", "tall", "teach", "team", "teeth", "tell", "ten", "term",
    "test", "than", "thank", "that", "the", "their", "them", "then", "there", "these", "thick",
    "thin", "thing", "think", "third", "this", "those", "though", "thought", "three", "through",
    "throw", "tie", "time", "tiny", "tire", "together", "told", "tone", "too", "took", "tool",
    "top", "total", "touch", "toward", "town", "track", "trade", "train", "travel", "tree",
    "triangle", "trip", "trouble", "truck", "true", "try", "tube", "turn", "twenty", "two",
    "type", "under", "unit", "until", "up", "upon", "use", "usual", "valley", "value", "vary",
    "verb", "very", "view", "village", "visit", "voice", "vowel", "wait", "walk", "wall",
    "want", "war", "warm", "wash", "watch", "water", "wave", "way", "wear", "weather", "week",
    "weight", "well", "went", "were", "west", "what", "wheel", "when", "where", "which",
    "while", "white", "who", "whole", "whose", "why", "wide", "wife", "wild", "will", "win",
    "wind", "window", "wing", "winter", "wire", "wish", "with", "woman", "wonder", "wood",
    "word", "work", "world", "would", "write", "written", "wrong", "wrote", "yard", "year",
    "yellow", "yes", "yet", "you", "young", "your", "zero", "2024", "1999", "365", "42", "100",
    "911", "404", "7up", "3d", "4x4", "b2b", "24h",
};
}  // namespace

std::span<const std::string_view> builtin_words() { return kWords; }

}  // namespace dig
