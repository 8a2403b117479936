#include "prompt_templates.hpp"

namespace wukong::templates {

// Placeholders: {material} is the selected evidence, {questions} the
// questions produced by an earlier phase.

const char* const kTextOnlyTrain = R"(Task Definition:
Generate 3 high quality academic questions and corresponding answers based on the provided text/image/table.
Requirements:
- The questions should require very complex reasoning and global understanding and the answer should be detailed and can be answered by the material, do not add extra information.
- Remember it is only a paragraph rather than a whole passage so do not ask global question about the study.
- Generate question-answer pairs instead of multiple-choice questions.
- Do not generate global question about the paper such as main idea or abstract.
- You should use English.
Expected Output:
List your Q and A as:
[Q1]:
[A1]:
[Q2]:
[A2]:
[Q3]:
[A3]:

Remember again all the questions should be academic and can be answered by the information in the material.Do not add extra information.Do not ask about the main idea.

{material})";

const char* const kTextImageTrain = R"(Task Definition:
Generate 2 high-quality academic questions and corresponding answers based solely on a provided figure of a research paper, without relying on accompanying text for the questions. However, you may use the provided text to understand the figure. Ensure these questions demand complex reasoning, focusing exclusively on details within the figure that are critical for understanding. The answers must be detailed, directly reflecting the content in the figure and capable of being derived solely from the figure without extraneous information.
Requirements:
Thoroughly analyze the provided figure of the research paper, attaining a deep understanding of its contents, including but not limited to, the study's objectives, methodologies, results, and conclusions. Develop 2 academic questions that:
- Must not mention the name of the figure directly or words like "figure","table" in the question.
- Demand complex reasoning and a comprehensive understanding of the whole figure.
- Must ask questions that can only be answered by the content in the figure, without reliance on textual information.
- Integrate knowledge from the entire figure, reflecting a nuanced understanding. Frame questions to elicit detailed and informed responses directly supported by the figure.

Craft detailed answers for each question that:
- Are directly derived from the provided figure, excluding information not found within the material.
- Are comprehensive and cover all relevant aspects, as presented in the provided figure. Accurately reflect the information and insights offered by the research paper figure.
Expected Output:
List your Q and A as:
[Q1]: [Formulate the first academic question here, ensuring it requires complex reasoning and encompasses the entirety of the provided figure for a comprehensive understanding. Based solely on the figure, without referencing accompanying text. Must not mention the name of the figure directly. Must not mention words like "figure", "table" exc.]
[A1]: [Provide a detailed answer here, derived exclusively from the information within the provided figure, ensuring the response is thorough and precise without including extraneous details. Mention from which figure/table you get the answer.]
[Q2]: ...
[A2]: ...

Here is the supplementary paragraph text for the figure:
{material})";

const char* const kSectionTrain = R"(Task Definition:
Generate 3 high-quality academic questions and corresponding answers based on a section of a research paper.
Requirements:
Each question should generate two types of answers. The first answer should be concise, directly addressing the question with minimal wording. The second answer should include a "chain of thought" that provides a reasoning process and be detailed. You should use English.
Generate questions that:
- Can be answered with simple reasoning and only require a global understanding. The question should be able to answered directly with the material. Do not include 2 or more subquestions in each question. Ensure that the concise answers can be provided using sentences or phrases that do not exceed 20 words in length.
- Remember it is only a paragraph rather than a whole passage so do not ask global question about the study.
- Generate question-answer pairs instead of multiple-choice questions.
- Do not generate global question about the paper such as main idea or abstract.
- Must not mention the name of the figure directly or words like "figure", "table" exc in the question.
- Must ask questions that can only be answered by the content in the figure, without reliance on textual information.
Craft the 2 answers for each question that:
- Are directly derived from the provided figure, excluding information not found within the material.
- Are comprehensive and cover all relevant aspects, as presented in the provided figure. Accurately reflect the information and insights offered by the research paper figure.
Expected Output:
List your Q and A as:
[Q1]: [Insert the academic question here, can be answered directly from the material]
[A11]: [Insert the concise answer here, providing a straightforward, brief response directly addressing the question, no more than 20 words]
[A12]: [Insert the detailed answer here, based solely on the given information. This answer must include a detailed "thought chain" or reasoning process, detailing how the conclusions are drawn from the image and caption. Must not mention the name of the figure/table from which the answer is derived directly, without adding extraneous details.]
[Q2]: ...
[A21]: ...
[A22]: ...
[Q3]: ...
[A31]: ...
[A32]: ...
Remember again all the questions should be academic and can be answered by the information in the material.Do not add extra information.Do not ask about the main idea.
Here is the supplementary paragraph text for the figure:
{material})";

const char* const kCrossQuestionTrain = R"(Task Definition:
Based on the selected paragraph from a research paper that share a thematic or conceptual connection, formulate an insightful, open-ended question. This question should reflect the shared themes or concepts of your selections and relate to the broader context of the research paper.
Requirements:
- Ascertain the underlying connection among the paragraphs and the figures/tables(if provided).
- Subsequently, craft an insightful, open-ended question that encapsulates the identified themes or connections, aiming to foster analytical thinking and in-depth discussion on the subject matter of the paper.
- Note that your question should not directly include the "idx"s of the paragraphs.
Expected Output:
[Q]: [Your generated question based on the shared themes or information]

Here are the selected paragraphs in the paper:
{material})";

const char* const kCrossAnswerTrain = R"(Task Definition:
Given some selected paragraphs from a research paper, each chosen based on their relevance (excluding the first 3 paragraphs), and ensuring that these paragraphs share a certain level of association, you are to answer a question that is related to the content of these selected paragraphs. The question is crafted to encompass the themes or findings presented in the paragraphs of the chosen paragraphs, aiming for a comprehensive understanding and connection between these elements.
Requirements:
Craft the 2 answers for the question that:
- Are directly derived from the provided figure, excluding information not found within the material.
- Are comprehensive and cover all relevant aspects, as presented in the provided figure. Accurately reflect the information and insights offered by the research paper figure.

Expected Output:
[A1]: [Insert the concise answer here, providing a straightforward, brief response directly addressing the question, no more than 20 words.]
[A2]: [Insert the detailed answer here, based solely on the given information. This answer must include a detailed "thought chain" or reasoning process, detailing how the conclusions are drawn from the image and caption. Must not mention the name of the figure/table from which the answer is derived directly, without adding extraneous details.]

The question is: {questions}

{material})";

const char* const kTextOnlyTestQuestion = R"(Task Definition:
Create 2 academic questions from a given research paper paragraph.
Requirements:
Analyze the paragraph thoroughly,understanding its content including the study's objectives, ethods, results,and conclusions.
Focus on the paragraph,not the entire paper.
If the paragraph lacks valid information,return `quit'.
You should use English.
Develop 2 questions that:
- No more than 30 words.
- Incorporate knowledge from the paragraph.
- Should be answered by text instead of one of the multiple choices.
- Elicit detailed responses supported by the text.
Expected Output: (Return `quit' directly if the paragraph lacks valid information.)
[Q1]:  question1 here
[Q2]: question2 here

{material})";

const char* const kTextOnlyTestAnswer1 = R"(Task Definition:
Answer 2 questions based on the material given.
Requirements:
The answers should be:
- No more than one sentence, less than 20 words.
- Comprehensive and cover all relevant aspects.
- Accurately reflect the paragraph's information and insights.
You should think step by step and give you answer in the end of your generation like: [thinking procedure]: [A1/A2]
Expected Output:
[thinking procedure]: ...
[A1]: answer1 here, no more than one sentence.
[thinking procedure]: ...
[A2]: answer2 here, no more than one sentence.

{material}

{questions})";

const char* const kTextOnlyTestAnswer2 = R"(Task Definition:
Answer 2 questions based on the material given.
Requirements:
The answers should be:
- Within a few keywords, less than 20 words.
- Comprehensive and cover all relevant aspects.
- Accurately reflect the paragraph's information and insights.
You should think step by step and give you answer in the end of your generation like: [thinking procedure]: [A1/A2]
Expected Output:
[thinking procedure]: ...
[A1]: answer1 here, within a few keywords.
[thinking procedure]: ...
[A2]: answer2 here, within a few keywords.

{material}

{questions})";

const char* const kTextImageTestQuestion = R"(Task Definition:
Formulate 2 academic questions based on the provided figures and tables from a research paper.
Requirements:
Analyze the paragraph thoroughly,understanding its content including the study's objectives, ethods, results,and conclusions.
Focus on the paragraph,not the entire paper.
If the paragraph lacks valid information,return `quit'.
You should use English.
Develop 2 questions that:
- No more than 30 words.
- Are specific to the unique data or details visible in the figures/tables and are answerable only based on the material without inferring or speculating on details not explicitly explained by the figures/tables.
- Must not mention the label of the figure/table directly or use words like `from the figure/table'.
Expected Output:
[Q1]:
[Q2]:

{material})";

const char* const kTextImageTestAnswer1 = R"(Task Definition:
Answer 2 questions based on the material given.
Requirements:
The answers should be:
- No more than one sentence, less than 20 words.
- Always use English.
- Do not infer or speculate on details not explicitly explained by the figures/tables.
You should think step by step and give you answer in the end of your generation like: [thinking procedure]: [A1/A2]
Expected Output:
[thinking procedure]: ...
[A1]: answer1 here, no more than one sentence.
[thinking procedure]: ...
[A2]: answer2 here, no more than one sentence.

{material}

{questions})";

const char* const kTextImageTestAnswer2 = R"(Task Definition:
Answer 2 questions based on the material given.
Requirements:
The answers should be:
- Within a few keywords, less than 20 words.
- Comprehensive and cover all relevant aspects.
- Accurately reflect the paragraph's information and insights.
You should think step by step and give you answer in the end of your generation like: [thinking procedure]: [A1/A2]
Expected Output:
[thinking procedure]: ...
[A1]: answer1 here, within a few keywords.
[thinking procedure]: ...
[A2]: answer2 here, within a few keywords.

{material}

{questions})";

const char* const kSectionTestQuestion = R"(Task Definition:
Formulate 2 academic questions based on a section from a research paper.
Requirements:
Carefully read and comprehend the entire provided section of the research paper to ensure a thorough understanding of its content, including key points, findings, methodologies, and conclusions.
You should Always use English.
Develop 2 questions that:
- No more than 30 words.
- Require an integration of information from all paragraphs and figures/tables in the section.
- Must not mention the label of the figure/table directly or use words like `from the figure/table'.
- Not based on common knowledge or assumptions not supported by the figures and tables.
Expected Output:
[Q1]:
[Q2]:

{material})";

const char* const kSectionTestAnswer1 = R"(Task Definition:
Answer 2 questions based on the material given.
Requirements:
The answers should be:
- No more than one sentence, less than 20 words.
- Always use English.
- Do not infer or speculate on details not explicitly explained by the figures/tables.
You should think step by step and give you answer in the end of your generation like: [thinking procedure]: [A1/A2]
Expected Output:
[thinking procedure]: ...
[A1]: answer1 here, no more than one sentence.
[thinking procedure]: ...
[A2]: answer2 here, no more than one sentence.

{material}

{questions})";

const char* const kSectionTestAnswer2 = R"(Task Definition:
Answer 2 questions based on the material given.
Requirements:
The answers should be:
- Within a few keywords, less than 20 words.
- Comprehensive and cover all relevant aspects.
- Accurately reflect the paragraph's information and insights.
You should think step by step and give you answer in the end of your generation like: [thinking procedure]: [A1/A2]
Expected Output:
[thinking procedure]: ...
[A1]: answer1 here, within a few keywords.
[thinking procedure]: ...
[A2]: answer2 here, within a few keywords.

{material}

{questions})";

}  // namespace wukong::templates
