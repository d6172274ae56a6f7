"""Regenerates golden_corpus.jsonl.

Each line holds a canonical document (`raw`) and the annotations it was
built from. The annotations are written here, not read back from the Rust
parser, so the corpus checks extraction independently.

    python3 make_golden.py > golden_corpus.jsonl
"""

import json
import random
import unicodedata

LANGS = {
    "en": (["red sign above the door", "price tag", "street name"], "The image shows a shop front.", "The sign reads the opening hours, so the answer follows.", ["9 am", "closed", "Main Street"]),
    "zh": (["门上的红色招牌", "价格标签", "街道名称"], "图片显示一家商店的门面。", "招牌上写着营业时间，因此可以得出答案。", ["九点", "关门", "中山路"]),
    "pt": (["placa vermelha", "etiqueta de preço", "nome da rua"], "A imagem mostra uma loja.", "A placa indica o horário, então a resposta é clara.", ["nove horas", "fechado", "Rua São João"]),
    "ar": (["لافتة حمراء فوق الباب", "بطاقة السعر", "اسم الشارع"], "تظهر الصورة واجهة متجر.", "تشير اللافتة إلى ساعات العمل، لذلك الجواب واضح.", ["٤٢٧", "مغلق", "شارع النيل"]),
    "tr": (["kapının üstündeki kırmızı tabela", "fiyat etiketi", "sokak adı"], "Görüntüde bir dükkân cephesi var.", "Tabela çalışma saatlerini gösteriyor, bu yüzden cevap belli.", ["saat dokuz", "kapalı", "İstiklal Caddesi"]),
    "ru": (["красная вывеска над дверью", "ценник", "название улицы"], "На изображении витрина магазина.", "Вывеска показывает часы работы, поэтому ответ ясен.", ["девять", "закрыто", "Тверская улица"]),
    "de": (["rotes Schild über der Tür", "Preisschild", "Straßenname"], "Das Bild zeigt ein Geschäft.", "Das Schild nennt die Öffnungszeiten, daher folgt die Antwort.", ["neun Uhr", "geschlossen", "Hauptstraße"]),
    "fr": (["enseigne rouge au-dessus de la porte", "étiquette de prix", "nom de rue"], "L'image montre une boutique.", "L'enseigne indique les horaires, donc la réponse suit.", ["neuf heures", "fermé", "rue de la Paix"]),
    "it": (["insegna rossa sopra la porta", "cartellino del prezzo", "nome della via"], "L'immagine mostra un negozio.", "L'insegna riporta gli orari, quindi la risposta è chiara.", ["alle nove", "chiuso", "Via Roma"]),
    "ja": (["ドアの上の赤い看板", "値札", "通りの名前"], "画像には店の正面が写っている。", "看板に営業時間が書かれているので答えが分かる。", ["九時", "閉店", "銀座通り"]),
    "ko": (["문 위의 빨간 간판", "가격표", "거리 이름"], "이미지에는 가게 앞이 보인다.", "간판에 영업 시간이 적혀 있어 답을 알 수 있다.", ["아홉 시", "휴무", "세종대로"]),
    "th": (["ป้ายสีแดงเหนือประตู", "ป้ายราคา", "ชื่อถนน"], "ภาพแสดงหน้าร้านค้า", "ป้ายบอกเวลาทำการ ดังนั้นคำตอบจึงชัดเจน", ["เก้าโมง", "ปิด", "ถนนสุขุมวิท"]),
    "vi": (["biển đỏ phía trên cửa", "nhãn giá", "tên đường"], "Hình ảnh cho thấy một cửa hàng.", "Biển ghi giờ mở cửa, vì vậy câu trả lời rõ ràng.", ["chín giờ", "đóng cửa", "Đường Lê Lợi"]),
}


def nfc(s):
    return unicodedata.normalize("NFC", s)


def main():
    rng = random.Random(20240601)
    codes = sorted(LANGS)
    for i in range(200):
        code = codes[i % len(codes)]
        summaries, caption, reasoning, answers = LANGS[code]
        n_seg = rng.randint(0, 4)
        segments = []
        for k in range(n_seg):
            x1, y1 = rng.randint(0, 400), rng.randint(0, 400)
            x2, y2 = x1 + rng.randint(0, 300), y1 + rng.randint(0, 200)
            segments.append([[x1, y1, x2, y2], nfc(f"{summaries[k % len(summaries)]} {k + 1}")])
        objects = None if i % 17 == 5 else rng.randint(0, 12)
        with_caption = i % 11 != 3
        with_reasoning = i % 13 != 7
        doc = {
            "id": f"g{i:03d}",
            "language": code,
            "text_segments": n_seg,
            "objects": objects,
            "segments": segments,
            "caption": nfc(caption) if with_caption else "",
            "reasoning": nfc(reasoning) if with_reasoning else "",
            "answer": nfc(answers[i % len(answers)]),
        }
        raw = ""
        if segments:
            raw += "<segments>\n"
            for box, summary in segments:
                raw += "[{},{},{},{}] {}\n".format(*box, summary)
            raw += "</segments>\n"
        raw += "\\lang{%s}\n" % code
        if objects is not None:
            raw += "\\obj{%d}\n" % objects
        if doc["caption"]:
            raw += doc["caption"] + "\n"
        raw += "<think>\n"
        if doc["reasoning"]:
            raw += doc["reasoning"] + "\n"
        raw += "</think>\n"
        raw += "<answer>" + doc["answer"] + "</answer>"
        doc["raw"] = raw
        print(json.dumps(doc, ensure_ascii=False))


if __name__ == "__main__":
    main()
